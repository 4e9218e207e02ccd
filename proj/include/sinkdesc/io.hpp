#pragma once

#include <filesystem>
#include <string>

#include "sinkdesc/measure.hpp"

namespace sinkdesc {

/// Point-cloud CSV: header `x0,...,x{d-1}[,w]`, one row per atom.
/// Values are written with 17 significant digits so they round-trip exactly.
DiscreteMeasure read_measure_csv(const std::filesystem::path& path);
void write_measure_csv(const std::filesystem::path& path, const DiscreteMeasure& measure);
std::string format_measure_csv(const DiscreteMeasure& measure);
DiscreteMeasure parse_measure_csv(const std::string& text, const std::string& origin = "<string>");

/// 8-bit grayscale or RGB PNG; RGB is reduced with Rec. 601 luma weights.
GrayImage read_png(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// "%.17g" formatting, with `nan`/`inf` spelled out.
std::string format_double(double value);

}  // namespace sinkdesc
