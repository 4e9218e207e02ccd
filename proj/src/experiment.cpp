#include "sinkdesc/experiment.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "sinkdesc/io.hpp"

namespace sinkdesc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view library_version() { return SINKDESC_VERSION; }

std::string_view to_string(ExperimentName name) {
  switch (name) {
    case ExperimentName::Ellipses: return "ellipses";
    case ExperimentName::Sketch: return "sketch";
    case ExperimentName::Gaussians: return "gaussians";
    case ExperimentName::Custom: return "custom";
  }
  return "custom";
}

std::string_view to_string(Method method) { return method == Method::FrankWolfe ? "fw" : "sd"; }

namespace {

ExperimentName parse_name(const std::string& s) {
  if (s == "ellipses") return ExperimentName::Ellipses;
  if (s == "sketch") return ExperimentName::Sketch;
  if (s == "gaussians") return ExperimentName::Gaussians;
  if (s == "custom") return ExperimentName::Custom;
  throw Error(ErrorKind::InvalidArgument, "unknown experiment name '" + s + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const char* scope) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidArgument, std::string(scope) + "." + key + " has the wrong type");
  }
}

template <typename T>
T require(const json& obj, const char* key, const char* scope) {
  if (!obj.contains(key)) {
    throw Error(ErrorKind::InvalidArgument, std::string("missing required parameter ") + scope + "." + key);
  }
  return get_or<T>(obj, key, T{}, scope);
}

int require_positive_int(const json& obj, const char* key, int minimum = 1) {
  const int v = require<int>(obj, key, "parameters");
  if (v < minimum) {
    throw Error(ErrorKind::InvalidArgument,
                std::string("parameters.") + key + " must be at least " + std::to_string(minimum));
  }
  return v;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double bandwidth_for(const json& params, const DiscreteMeasure& initial) {
  if (params.contains("bandwidth")) return get_or<double>(params, "bandwidth", 1.0, "parameters");
  if (initial.size() < 2) return 1.0;
  const double h = median_heuristic_bandwidth(initial);
  return h > 0.0 ? h : 1.0;
}

Box grow_to_contain(Box box, const std::vector<const Matrix*>& clouds) {
  for (const Matrix* m : clouds) {
    for (Eigen::Index k = 0; k < m->cols(); ++k) {
      box.lower[k] = std::min(box.lower[k], m->col(k).minCoeff());
      box.upper[k] = std::max(box.upper[k], m->col(k).maxCoeff());
    }
  }
  return box;
}

BarycenterProblem make_problem(std::vector<DiscreteMeasure> sources, const Box& box, double bandwidth,
                               double gamma) {
  for (const auto& s : sources) s.require_inside(box);
  BarycenterProblem p{std::move(sources), GroundCost::for_box(CostKind::SquaredEuclideanHalf, box),
                      RbfKernel(bandwidth), gamma, box};
  p.validate();
  return p;
}

DiscreteMeasure initial_from(const std::string& init, const Box& box, std::uint64_t seed) {
  constexpr std::string_view prefix = "uniform:";
  if (init.rfind(prefix, 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(init.substr(prefix.size()));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "init must be 'uniform:N' or a CSV path, got '" + init + "'");
    }
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "init uniform:N needs N >= 1");
    return generate_uniform(seed, n, box);
  }
  return read_measure_csv(init);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ExperimentSetup build_ellipses(const ExperimentSpec& spec) {
  const json& p = spec.parameters;
  const int n_sources = require_positive_int(p, "n_sources");
  const int points = require_positive_int(p, "points_per_source", 3);
  const int particles = require_positive_int(p, "particles");
  const double jitter = get_or<double>(p, "jitter", 0.0, "parameters");
  const double half = get_or<double>(p, "box_half_width", 1.2, "parameters");
  const std::uint64_t seed = spec.descent.seed;

  std::vector<DiscreteMeasure> sources;
  for (int k = 0; k < n_sources; ++k) {
    sources.push_back(generate_ellipse(mix_seed(seed, 1, static_cast<std::uint64_t>(k)), points, jitter));
  }
  std::vector<const Matrix*> clouds;
  for (const auto& s : sources) clouds.push_back(&s.points());
  const Box box = grow_to_contain(Box::cube(2, half), clouds);
  DiscreteMeasure initial = generate_uniform(mix_seed(seed, 2, 0), particles, Box::cube(2, half));
  const double bw = bandwidth_for(p, initial);
  return {make_problem(std::move(sources), box, bw, spec.descent.sinkhorn.gamma), std::move(initial)};
}

ExperimentSetup build_sketch(const ExperimentSpec& spec) {
  const json& p = spec.parameters;
  const auto image_path = require<std::string>(p, "image", "parameters");
  const int particles = require_positive_int(p, "particles");
  const double threshold = get_or<double>(p, "threshold", 0.05, "parameters");
  const bool invert = get_or<bool>(p, "invert", false, "parameters");
  if (!fs::exists(image_path)) throw Error(ErrorKind::Io, "image file not found: " + image_path);

  GrayImage img = read_png(image_path);
  if (invert) {
    for (double& v : img.pixels) v = 1.0 - v;
  }
  std::vector<DiscreteMeasure> sources{measure_from_image(img, threshold)};
  const Box box{Vector::Zero(2), Vector::Ones(2)};
  DiscreteMeasure initial = generate_uniform(mix_seed(spec.descent.seed, 2, 0), particles, box);
  const double bw = bandwidth_for(p, initial);
  return {make_problem(std::move(sources), box, bw, spec.descent.sinkhorn.gamma), std::move(initial)};
}

ExperimentSetup build_gaussians(const ExperimentSpec& spec) {
  const json& p = spec.parameters;
  const int n_sources = require_positive_int(p, "n_sources");
  const int dim = require_positive_int(p, "dim");
  const int samples = require_positive_int(p, "samples");
  const int particles = require_positive_int(p, "particles");
  const double stddev = get_or<double>(p, "stddev", 1.0, "parameters");
  const double spread = get_or<double>(p, "spread", 4.0 * stddev, "parameters");
  const double init_half = get_or<double>(p, "init_half_width", spread, "parameters");
  if (!(stddev > 0.0)) throw Error(ErrorKind::InvalidArgument, "parameters.stddev must be positive");
  const std::uint64_t seed = spec.descent.seed;

  const Matrix means = symmetric_means(mix_seed(seed, 3, 0), n_sources, dim, spread);
  std::vector<DiscreteMeasure> sources;
  for (int k = 0; k < n_sources; ++k) {
    sources.push_back(generate_gaussian(mix_seed(seed, 4, static_cast<std::uint64_t>(k)), samples,
                                        means.row(k).transpose(), stddev));
  }
  std::vector<const Matrix*> clouds;
  for (const auto& s : sources) clouds.push_back(&s.points());
  const Box box = grow_to_contain(Box::cube(dim, std::max(spread + 6.0 * stddev, init_half)), clouds);
  DiscreteMeasure initial = generate_uniform(mix_seed(seed, 2, 0), particles, Box::cube(dim, init_half));
  const double bw = bandwidth_for(p, initial);
  return {make_problem(std::move(sources), box, bw, spec.descent.sinkhorn.gamma), std::move(initial)};
}

ExperimentSetup build_custom(const ExperimentSpec& spec) {
  const json& p = spec.parameters;
  const auto paths = require<std::vector<std::string>>(p, "sources", "parameters");
  if (paths.empty()) throw Error(ErrorKind::InvalidArgument, "parameters.sources must list at least one CSV file");
  std::vector<DiscreteMeasure> sources;
  for (const auto& path : paths) {
    if (!fs::exists(path)) throw Error(ErrorKind::Io, "source file not found: " + path);
    sources.push_back(read_measure_csv(path));
  }
  const auto init = require<std::string>(p, "init", "parameters");
  std::vector<const Matrix*> clouds;
  for (const auto& s : sources) clouds.push_back(&s.points());

  std::optional<DiscreteMeasure> init_measure;
  if (init.rfind("uniform:", 0) != 0) {
    if (!fs::exists(init)) throw Error(ErrorKind::Io, "initial measure file not found: " + init);
    init_measure = read_measure_csv(init);
    clouds.push_back(&init_measure->points());
  }
  Box box = Box::bounding(clouds, 0.1);
  if (p.contains("box")) {
    const auto lo = require<std::vector<double>>(p["box"], "lower", "parameters.box");
    const auto hi = require<std::vector<double>>(p["box"], "upper", "parameters.box");
    if (lo.size() != hi.size()) throw Error(ErrorKind::InvalidArgument, "parameters.box bounds differ in length");
    box.lower = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    box.upper = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  }
  DiscreteMeasure initial = init_measure ? *init_measure : initial_from(init, box, mix_seed(spec.descent.seed, 2, 0));
  initial.require_inside(box);
  const double bw = bandwidth_for(p, initial);
  return {make_problem(std::move(sources), box, bw, spec.descent.sinkhorn.gamma), std::move(initial)};
}

json descent_to_json(const DescentConfig& d) {
  return {{"step_size", d.step_size},
          {"max_steps", d.max_steps},
          {"ksbd_stop", d.ksbd_stop},
          {"backtracking", d.backtracking},
          {"seed", d.seed},
          {"minibatch", d.minibatch},
          {"sinkhorn",
           {{"gamma", d.sinkhorn.gamma},
            {"tolerance", d.sinkhorn.tolerance},
            {"max_iterations", d.sinkhorn.max_iterations},
            {"symmetric_damping", d.sinkhorn.symmetric_damping}}}};
}

DescentConfig descent_from_json(const json& j) {
  DescentConfig d;
  d.step_size = get_or<double>(j, "step_size", d.step_size, "descent");
  d.max_steps = get_or<int>(j, "max_steps", d.max_steps, "descent");
  d.ksbd_stop = get_or<double>(j, "ksbd_stop", d.ksbd_stop, "descent");
  d.backtracking = get_or<bool>(j, "backtracking", d.backtracking, "descent");
  d.seed = get_or<std::uint64_t>(j, "seed", d.seed, "descent");
  d.minibatch = get_or<int>(j, "minibatch", d.minibatch, "descent");
  if (!j.contains("sinkhorn")) throw Error(ErrorKind::InvalidArgument, "missing required parameter descent.sinkhorn.gamma");
  const json& s = j.at("sinkhorn");
  d.sinkhorn.gamma = require<double>(s, "gamma", "descent.sinkhorn");
  d.sinkhorn.tolerance = get_or<double>(s, "tolerance", d.sinkhorn.tolerance, "descent.sinkhorn");
  d.sinkhorn.max_iterations = get_or<int>(s, "max_iterations", d.sinkhorn.max_iterations, "descent.sinkhorn");
  d.sinkhorn.symmetric_damping = get_or<double>(s, "symmetric_damping", d.sinkhorn.symmetric_damping, "descent.sinkhorn");
  d.validate();
  return d;
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, "experiment spec must be a JSON object");
  ExperimentSpec spec;
  spec.name = parse_name(require<std::string>(j, "name", "spec"));
  spec.parameters = j.value("parameters", json::object());
  if (!spec.parameters.is_object()) throw Error(ErrorKind::InvalidArgument, "spec.parameters must be an object");
  spec.descent = descent_from_json(j.value("descent", json::object()));
  spec.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "run", "spec"));
  const auto method = get_or<std::string>(j, "method", "sd", "spec");
  if (method == "sd") {
    spec.method = Method::SinkhornDescent;
  } else if (method == "fw") {
    spec.method = Method::FrankWolfe;
  } else {
    throw Error(ErrorKind::InvalidArgument, "spec.method must be 'sd' or 'fw'");
  }

  // Paths inside parameters are relative to the spec file.
  json& params = spec.parameters;
  if (params.contains("image") && params["image"].is_string()) {
    params["image"] = resolve(base_dir, params["image"].get<std::string>()).string();
  }
  if (params.contains("sources") && params["sources"].is_array()) {
    for (auto& s : params["sources"]) {
      if (s.is_string()) s = resolve(base_dir, s.get<std::string>()).string();
    }
  }
  if (params.contains("init") && params["init"].is_string()) {
    const auto init = params["init"].get<std::string>();
    if (init.rfind("uniform:", 0) != 0) params["init"] = resolve(base_dir, init).string();
  }
  return spec;
}

json ExperimentSpec::to_json() const {
  return {{"name", std::string(to_string(name))},
          {"parameters", parameters},
          {"descent", descent_to_json(descent)},
          {"output_dir", output_dir.string()},
          {"method", std::string(to_string(method))}};
}

Matrix symmetric_means(std::uint64_t seed, int n_sources, int dim, double spread) {
  if (n_sources < 1 || dim < 1) throw Error(ErrorKind::InvalidArgument, "need n_sources >= 1 and dim >= 1");
  Matrix means = Matrix::Zero(n_sources, dim);
  if (n_sources == 1) return means;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (dim == 1) {
    for (int k = 0; k < n_sources; ++k) means(k, 0) = spread * (-1.0 + 2.0 * k / (n_sources - 1.0));
    return means;
  }

  // Canonical configuration in the first coordinates: a regular simplex when it fits, else a regular polygon.
  Matrix canonical = Matrix::Zero(n_sources, dim);
  if (n_sources <= dim) {
    for (int k = 0; k < n_sources; ++k) canonical(k, k) = 1.0;
    const Eigen::RowVectorXd centroid = canonical.colwise().mean();
    canonical.rowwise() -= centroid;
  } else {
    for (int k = 0; k < n_sources; ++k) {
      const double t = 2.0 * std::numbers::pi * k / n_sources;
      canonical(k, 0) = std::cos(t);
      canonical(k, 1) = std::sin(t);
    }
  }
  for (int k = 0; k < n_sources; ++k) canonical.row(k) *= spread / canonical.row(k).norm();

  // Seeded random rotation.
  Eigen::MatrixXd gauss(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) gauss(r, c) = normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd q = qr.householderQ();
  means = canonical * q.transpose();
  // Exact zero centroid after rounding.
  const Eigen::RowVectorXd centroid = means.colwise().mean();
  means.rowwise() -= centroid;
  return means;
}

ExperimentSetup build_experiment(const ExperimentSpec& spec) {
  spec.descent.validate();
  switch (spec.name) {
    case ExperimentName::Ellipses: return build_ellipses(spec);
    case ExperimentName::Sketch: return build_sketch(spec);
    case ExperimentName::Gaussians: return build_gaussians(spec);
    case ExperimentName::Custom: return build_custom(spec);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown experiment");
}

FwConfig fw_config_from(const ExperimentSpec& spec) {
  FwConfig cfg;
  cfg.grid_resolution = get_or<int>(spec.parameters, "grid_resolution", cfg.grid_resolution, "parameters");
  cfg.steps = get_or<int>(spec.parameters, "fw_steps", spec.descent.max_steps, "parameters");
  const auto rule = get_or<std::string>(spec.parameters, "weight_rule", "two_over_t_plus_two", "parameters");
  if (rule == "harmonic") {
    cfg.weight_rule = WeightRule::Harmonic;
  } else if (rule == "two_over_t_plus_two") {
    cfg.weight_rule = WeightRule::TwoOverTPlusTwo;
  } else {
    throw Error(ErrorKind::InvalidArgument, "parameters.weight_rule must be 'harmonic' or 'two_over_t_plus_two'");
  }
  cfg.sinkhorn = spec.descent.sinkhorn;
  cfg.validate();
  return cfg;
}

void write_run(const fs::path& output_dir, const DiscreteMeasure& final, const DescentTrace& trace,
               const ExperimentSpec& spec, const BarycenterProblem& problem, const RunSummary& summary) {
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + output_dir.string() + ": " + ec.message());

  write_measure_csv(output_dir / "particles.csv", final);
  write_file_atomic(output_dir / "trace.csv", format_trace_csv(trace));

  json run = {{"spec", spec.to_json()},
              {"version", std::string(library_version())},
              {"steps_completed", trace.steps_completed()},
              {"wall_ms", summary.wall_ms}};
  const auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  run["final_objective"] = trace.records.empty() ? json(nullptr) : finite_or_null(trace.records.back().objective);
  run["final_ksbd"] = trace.records.empty() ? json(nullptr) : finite_or_null(trace.records.back().ksbd);
  if (final.dim() == 2) {
    write_file_atomic(output_dir / "scatter.svg", render_scatter_svg(problem.sources, final, problem.domain));
  } else {
    run["note"] = "scatter.svg skipped: plots are only drawn for d = 2 (d = " + std::to_string(final.dim()) + ")";
  }
  write_file_atomic(output_dir / "run.json", run.dump(2) + "\n");
}

DescentResult run_experiment(const ExperimentSpec& spec, const StepObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentSetup setup = build_experiment(spec);
  DescentResult result = spec.method == Method::FrankWolfe
                             ? run_fw(setup.initial, setup.problem, fw_config_from(spec), observer)
                             : run_sd(setup.initial, setup.problem, spec.descent, observer);
  RunSummary summary;
  summary.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  write_run(spec.output_dir, result.final, result.trace, spec, setup.problem, summary);
  return result;
}

}  // namespace sinkdesc
