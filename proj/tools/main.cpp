#include "cli.hpp"

int main(int argc, char** argv) { return sinkdesc::cli::run(argc, argv); }
