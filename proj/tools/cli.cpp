#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sinkdesc/descent.hpp"
#include "sinkdesc/experiment.hpp"
#include "sinkdesc/frank_wolfe.hpp"
#include "sinkdesc/io.hpp"
#include "sinkdesc/sinkhorn.hpp"

namespace sinkdesc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct SolverFlags {
  double gamma = 0.0;
  double tol = 1e-6;
  int max_iter = 100000;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, double default_tol) {
  f.tol = default_tol;
  cmd->add_option("--gamma", f.gamma, "Entropic regularization")->required()->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "Sinkhorn fixed-point tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-iter", f.max_iter, "Sinkhorn sweep limit")->check(CLI::PositiveNumber)->capture_default_str();
}

SinkhornConfig to_sinkhorn(const SolverFlags& f) {
  SinkhornConfig cfg;
  cfg.gamma = f.gamma;
  cfg.tolerance = f.tol;
  cfg.max_iterations = f.max_iter;
  return cfg;
}

struct RunFlags {
  std::vector<std::string> sources;
  std::string init;
  std::string out;
  std::optional<double> bandwidth;
  std::vector<double> box;
  std::uint64_t seed = 0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--sources", f.sources, "Source measure CSV files")->required()->expected(1, -1);
  cmd->add_option("--init", f.init, "Initial measure: CSV file or uniform:N")->required();
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--bandwidth", f.bandwidth, "RBF bandwidth (default: median heuristic on the initial measure)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--box", f.box, "Domain box LO HI applied to every axis (default: padded data bounds)")
      ->expected(2);
  cmd->add_option("--seed", f.seed, "Seed for uniform initialization and minibatches")->capture_default_str();
}

ExperimentSpec custom_spec(const RunFlags& f) {
  ExperimentSpec spec;
  spec.name = ExperimentName::Custom;
  spec.parameters["sources"] = f.sources;
  spec.parameters["init"] = f.init;
  if (f.bandwidth) spec.parameters["bandwidth"] = *f.bandwidth;
  spec.output_dir = f.out;
  spec.descent.seed = f.seed;
  return spec;
}

void apply_box(ExperimentSpec& spec, const RunFlags& f, int dim) {
  if (f.box.size() != 2) return;
  if (!(f.box[0] < f.box[1])) throw Error(ErrorKind::InvalidArgument, "--box needs LO < HI");
  spec.parameters["box"] = {{"lower", std::vector<double>(static_cast<std::size_t>(dim), f.box[0])},
                            {"upper", std::vector<double>(static_cast<std::size_t>(dim), f.box[1])}};
}

int source_dim(const std::vector<std::string>& sources) {
  return read_measure_csv(sources.front()).dim();
}

StepObserver verbose_observer(bool verbose, std::ostream& err) {
  if (!verbose) return {};
  return [&err](int step, const StepRecord& r) {
    err << "step " << step << " objective=" << fmt12(r.objective) << " ksbd=" << fmt12(r.ksbd)
        << " eta=" << fmt12(r.step_size) << " sweeps=" << r.sinkhorn_sweeps << "\n";
  };
}

int execute(const ExperimentSpec& spec, bool verbose, std::ostream& out, std::ostream& err) {
  try {
    const DescentResult result = run_experiment(spec, verbose_observer(verbose, err));
    const StepRecord& last = result.trace.records.back();
    out << "objective=" << fmt12(last.objective) << "\n";
    if (!std::isnan(last.ksbd)) out << "ksbd=" << fmt12(last.ksbd) << "\n";
    out << "steps=" << result.trace.steps_completed() << "\n";
    return kExitOk;
  } catch (const DescentFailure& e) {
    err << "error: " << e.what() << "\n";
    // Keep the partial run for inspection.
    try {
      const ExperimentSetup setup = build_experiment(spec);
      write_run(spec.output_dir, e.last(), e.trace(), spec, setup.problem);
    } catch (const std::exception&) {
    }
    return is_numerical(e.kind()) ? kExitNumerical : kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sinkhorn barycenters by particle descent", "sinkdesc"};
  app.set_version_flag("--version", std::string(library_version()));
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  bool verbose = false;
  app.add_option("--threads", threads, "Cap on worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "Log every step to standard error");

  // barycenter
  auto* bary = app.add_subcommand("barycenter", "Run Sinkhorn Descent on CSV measures");
  RunFlags bary_run;
  SolverFlags bary_solver;
  int bary_steps = 30;
  double eta = 0.1;
  bool no_backtrack = false;
  double ksbd_stop = 0.0;
  int minibatch = 0;
  add_run_flags(bary, bary_run);
  add_solver_flags(bary, bary_solver, 1e-6);
  bary->add_option("--steps", bary_steps, "Maximum number of descent steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  bary->add_option("--eta", eta, "Step size")->check(CLI::NonNegativeNumber)->capture_default_str();
  bary->add_flag("--no-backtrack", no_backtrack, "Disable the backtracking line search");
  bary->add_option("--ksbd-stop", ksbd_stop, "Stop once KSBD falls to this value")->check(CLI::NonNegativeNumber);
  bary->add_option("--minibatch", minibatch, "Per-source subsample size for gradients (0 = exact)")
      ->check(CLI::NonNegativeNumber);

  // divergence
  auto* div = app.add_subcommand("divergence", "Sinkhorn divergence between two CSV measures");
  std::string div_a, div_b, div_cost = "sqeuclidean";
  SolverFlags div_solver;
  bool raw = false;
  div->add_option("--a", div_a, "First measure CSV")->required();
  div->add_option("--b", div_b, "Second measure CSV")->required();
  add_solver_flags(div, div_solver, 1e-9);
  div->add_option("--cost", div_cost, "Ground cost")
      ->check(CLI::IsMember({"sqeuclidean", "euclidean"}))
      ->capture_default_str();
  div->add_flag("--raw", raw, "Also print the three OT_gamma terms");

  // ksbd
  auto* kcmd = app.add_subcommand("ksbd", "KSBD of a measure against source measures");
  std::string k_measure;
  std::vector<std::string> k_sources;
  std::optional<double> k_bandwidth;
  SolverFlags k_solver;
  kcmd->add_option("--measure", k_measure, "Measure CSV")->required();
  kcmd->add_option("--sources", k_sources, "Source measure CSV files")->required()->expected(1, -1);
  kcmd->add_option("--bandwidth", k_bandwidth, "RBF bandwidth (default: median heuristic on the measure)")
      ->check(CLI::PositiveNumber);
  add_solver_flags(kcmd, k_solver, 1e-9);

  // fw
  auto* fw = app.add_subcommand("fw", "Grid-search Frank-Wolfe baseline (d <= 3)");
  RunFlags fw_run;
  SolverFlags fw_solver;
  int fw_steps = 100;
  int grid = 64;
  std::string weight_rule = "two_over_t_plus_two";
  add_run_flags(fw, fw_run);
  add_solver_flags(fw, fw_solver, 1e-6);
  fw->add_option("--steps", fw_steps, "Number of FW steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  fw->add_option("--grid", grid, "Grid points per axis")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  fw->add_option("--weight-rule", weight_rule, "Mixing schedule")
      ->check(CLI::IsMember({"harmonic", "two_over_t_plus_two"}))
      ->capture_default_str();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an experiment described by a JSON spec");
  std::string spec_path, method_override, out_override;
  exp->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  exp->add_option("--method", method_override, "Override the spec's method")->check(CLI::IsMember({"sd", "fw"}));
  exp->add_option("--out", out_override, "Override the spec's output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (bary->parsed()) {
      ExperimentSpec spec = custom_spec(bary_run);
      apply_box(spec, bary_run, source_dim(bary_run.sources));
      spec.descent.step_size = eta;
      spec.descent.max_steps = bary_steps;
      spec.descent.backtracking = !no_backtrack;
      spec.descent.ksbd_stop = ksbd_stop;
      spec.descent.minibatch = minibatch;
      spec.descent.sinkhorn = to_sinkhorn(bary_solver);
      return execute(spec, verbose, out, err);
    }

    if (div->parsed()) {
      const DiscreteMeasure a = read_measure_csv(div_a);
      const DiscreteMeasure b = read_measure_csv(div_b);
      if (a.dim() != b.dim()) throw Error(ErrorKind::DimensionMismatch, "--a and --b have different dimensions");
      const Box box = Box::bounding({&a.points(), &b.points()}, 0.1);
      const GroundCost cost =
          GroundCost::for_box(div_cost == "euclidean" ? CostKind::Euclidean : CostKind::SquaredEuclideanHalf, box);
      const DivergenceTerms t = sinkhorn_divergence_terms(a, b, cost, to_sinkhorn(div_solver));
      out << "S_gamma=" << fmt12(t.value) << "\n";
      if (raw) {
        out << "OT_ab=" << fmt12(t.ot_ab) << "\n";
        out << "OT_aa=" << fmt12(t.ot_aa) << "\n";
        out << "OT_bb=" << fmt12(t.ot_bb) << "\n";
      }
      return kExitOk;
    }

    if (kcmd->parsed()) {
      RunFlags f;
      f.sources = k_sources;
      f.init = k_measure;
      f.bandwidth = k_bandwidth;
      ExperimentSpec spec = custom_spec(f);
      spec.descent.sinkhorn = to_sinkhorn(k_solver);
      const ExperimentSetup setup = build_experiment(spec);
      const DescentDirection dir = functional_gradient(setup.initial, setup.problem, spec.descent.sinkhorn);
      out << "KSBD=" << fmt12(ksbd(setup.initial, dir, setup.problem.kernel)) << "\n";
      return kExitOk;
    }

    if (fw->parsed()) {
      const int dim = source_dim(fw_run.sources);
      if (dim > 3) throw Error(ErrorKind::DimensionTooHigh, "grid search limited to d ≤ 3 (got d = " + std::to_string(dim) + ")");
      ExperimentSpec spec = custom_spec(fw_run);
      apply_box(spec, fw_run, dim);
      spec.method = Method::FrankWolfe;
      spec.parameters["grid_resolution"] = grid;
      spec.parameters["fw_steps"] = fw_steps;
      spec.parameters["weight_rule"] = weight_rule;
      spec.descent.max_steps = fw_steps;
      spec.descent.sinkhorn = to_sinkhorn(fw_solver);
      return execute(spec, verbose, out, err);
    }

    if (exp->parsed()) {
      if (!fs::exists(spec_path)) throw Error(ErrorKind::Io, "spec file not found: " + spec_path);
      json j;
      try {
        j = json::parse(read_file(spec_path));
      } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, spec_path + ": " + e.what());
      }
      ExperimentSpec spec = ExperimentSpec::from_json(j, fs::path(spec_path).parent_path());
      if (method_override == "sd") spec.method = Method::SinkhornDescent;
      if (method_override == "fw") spec.method = Method::FrankWolfe;
      if (!out_override.empty()) spec.output_dir = out_override;
      return execute(spec, verbose, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_numerical(e.kind()) ? kExitNumerical : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace sinkdesc::cli
