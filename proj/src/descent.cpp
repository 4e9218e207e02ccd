#include "sinkdesc/descent.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "numeric.hpp"

namespace sinkdesc {

void BarycenterProblem::validate() const {
  if (sources.empty()) throw Error(ErrorKind::InvalidArgument, "barycenter problem needs at least one source");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  const int d = sources.front().dim();
  if (domain.dim() != d) throw Error(ErrorKind::DimensionMismatch, "domain box dimension does not match the sources");
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (sources[k].dim() != d) {
      throw Error(ErrorKind::DimensionMismatch, "source " + std::to_string(k) + " has dimension " +
                                                    std::to_string(sources[k].dim()) + ", expected " +
                                                    std::to_string(d));
    }
  }
}

void DescentConfig::validate() const {
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
    throw Error(ErrorKind::InvalidArgument, "step size must be nonnegative and finite");
  }
  if (max_steps < 0) throw Error(ErrorKind::InvalidArgument, "max_steps must be nonnegative");
  if (!(ksbd_stop >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ksbd_stop must be nonnegative");
  if (minibatch < 0) throw Error(ErrorKind::InvalidArgument, "minibatch must be nonnegative");
  sinkhorn.validate();
}

// ---------------------------------------------------------------------------
// Trace CSV

std::string format_trace_csv(const DescentTrace& trace) {
  std::ostringstream out;
  out << "step,objective,ksbd,step_size,sinkhorn_sweeps,wall_ms\n";
  for (std::size_t t = 0; t < trace.records.size(); ++t) {
    const StepRecord& r = trace.records[t];
    char line[256];
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%d,%.3f\n", t, r.objective, r.ksbd, r.step_size,
                  r.sinkhorn_sweeps, r.wall_ms);
    out << line;
  }
  return out.str();
}

DescentTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,objective,ksbd,step_size,sinkhorn_sweeps,wall_ms") {
    throw Error(ErrorKind::Parse, "trace CSV header mismatch");
  }
  DescentTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw Error(ErrorKind::Parse, "trace CSV row has " + std::to_string(fields.size()) + " fields");
    StepRecord r;
    try {
      r.objective = std::stod(fields[1]);
      r.ksbd = std::stod(fields[2]);
      r.step_size = std::stod(fields[3]);
      r.sinkhorn_sweeps = std::stoi(fields[4]);
      r.wall_ms = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, "trace CSV row is not numeric: " + line);
    }
    trace.records.push_back(r);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Gradient assembly

namespace {

SinkhornConfig with_gamma(const SinkhornConfig& cfg, double gamma) {
  SinkhornConfig out = cfg;
  out.gamma = gamma;
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a * 1000003ULL + b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

BarycenterPotentials solve_barycenter_potentials(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                                 const SinkhornConfig& cfg, const BarycenterPotentials* warm) {
  problem.validate();
  if (alpha.dim() != problem.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "measure dimension " + std::to_string(alpha.dim()) +
                                                  " does not match the problem dimension " +
                                                  std::to_string(problem.dim()));
  }
  const SinkhornConfig solve_cfg = with_gamma(cfg, problem.gamma);
  const bool use_warm = warm != nullptr && warm->sources.size() == problem.sources.size();

  BarycenterPotentials out;
  out.sources.reserve(problem.sources.size());
  for (std::size_t k = 0; k < problem.sources.size(); ++k) {
    try {
      out.sources.push_back(solve_potentials(alpha, problem.sources[k], problem.cost, solve_cfg,
                                             use_warm ? &warm->sources[k] : nullptr));
    } catch (const Error& e) {
      throw Error(e.kind(), "source " + std::to_string(k) + ": " + e.what());
    }
    out.sweeps += out.sources.back().iterations_used;
  }
  try {
    out.self = solve_symmetric_potential(alpha, problem.cost, solve_cfg, use_warm ? &warm->self : nullptr);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("self-transport problem: ") + e.what());
  }
  out.sweeps += out.self.iterations_used;
  return out;
}

DescentDirection assemble_direction(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                    const BarycenterPotentials& potentials, int minibatch, std::uint64_t seed) {
  const int n = problem.num_sources();
  if (static_cast<int>(potentials.sources.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, "expected potentials for every source");
  }
  Matrix mean_source = Matrix::Zero(alpha.size(), alpha.dim());
  for (int k = 0; k < n; ++k) {
    mean_source += potential_gradient(potentials.sources[static_cast<std::size_t>(k)], alpha,
                                      problem.sources[static_cast<std::size_t>(k)], problem.cost, minibatch,
                                      mix_seed(seed, 0, static_cast<std::uint64_t>(k)));
  }
  mean_source /= static_cast<double>(n);

  DescentDirection dir;
  dir.xi = mean_source - potential_gradient(potentials.self, alpha, alpha, problem.cost);
  const Matrix gram = problem.kernel.gram(alpha.points(), alpha.points());
  dir.ds = gram * (alpha.weights().asDiagonal() * dir.xi);
  return dir;
}

DescentDirection functional_gradient(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                     const SinkhornConfig& cfg, const BarycenterPotentials* warm) {
  const BarycenterPotentials pots = solve_barycenter_potentials(alpha, problem, cfg, warm);
  return assemble_direction(alpha, problem, pots);
}

double ksbd(const DiscreteMeasure& alpha, const DescentDirection& direction, const RbfKernel& kernel) {
  if (direction.xi.rows() != alpha.size() || direction.xi.cols() != alpha.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "direction does not match the measure");
  }
  const Matrix gram = kernel.gram(alpha.points(), alpha.points());
  const Matrix weighted = alpha.weights().asDiagonal() * direction.xi;
  const Matrix smoothed = gram * weighted;
  detail::CompensatedSum total;
  for (Eigen::Index i = 0; i < weighted.rows(); ++i) total.add(weighted.row(i).dot(smoothed.row(i)));
  return std::max(0.0, total.value());
}

// ---------------------------------------------------------------------------
// Objective

BarycenterObjective::BarycenterObjective(const BarycenterProblem& problem, const SinkhornConfig& cfg)
    : problem_(problem), cfg_(with_gamma(cfg, problem.gamma)) {
  problem.validate();
  cfg_.validate();
  detail::CompensatedSum self;
  for (std::size_t k = 0; k < problem.sources.size(); ++k) {
    try {
      self.add(solve_symmetric_potential(problem.sources[k], problem.cost, cfg_).dual_value);
    } catch (const Error& e) {
      throw Error(e.kind(), "self-transport of source " + std::to_string(k) + ": " + e.what());
    }
  }
  source_self_term_ = 0.5 * self.value() / static_cast<double>(problem.sources.size());
}

double BarycenterObjective::objective_from(const BarycenterPotentials& potentials, const DiscreteMeasure&) const {
  detail::CompensatedSum cross;
  for (const auto& p : potentials.sources) cross.add(p.dual_value);
  const double n = static_cast<double>(potentials.sources.size());
  return cross.value() / n - 0.5 * potentials.self.dual_value - source_self_term_;
}

BarycenterObjective::Evaluation BarycenterObjective::evaluate(const DiscreteMeasure& alpha,
                                                              const BarycenterPotentials* warm) const {
  Evaluation e;
  e.potentials = solve_barycenter_potentials(alpha, problem_, cfg_, warm);
  e.objective = objective_from(e.potentials, alpha);
  return e;
}

// ---------------------------------------------------------------------------
// Descent loop

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Plain-decrease acceptance, up to the accuracy of the objective evaluations.
double acceptance_slack(const SinkhornConfig& cfg) { return 10.0 * cfg.tolerance; }

constexpr int kMaxHalvings = 20;

}  // namespace

SinkhornDescent::SinkhornDescent(const BarycenterProblem& problem, const DescentConfig& cfg, DiscreteMeasure initial)
    : objective_(problem, cfg.sinkhorn), cfg_(cfg), current_(std::move(initial)) {
  cfg_.validate();
  if (current_.dim() != problem.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "initial measure dimension " + std::to_string(current_.dim()) +
                                                  " does not match the problem dimension " +
                                                  std::to_string(problem.dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  eval_ = objective_.evaluate(current_);
  refresh_direction();
  StepRecord r;
  r.objective = eval_.objective;
  r.ksbd = ksbd_;
  r.sinkhorn_sweeps = eval_.potentials.sweeps;
  r.wall_ms = elapsed_ms(start);
  trace_.records.push_back(r);
}

void SinkhornDescent::refresh_direction() {
  direction_ = assemble_direction(current_, objective_.problem(), eval_.potentials, cfg_.minibatch,
                                  cfg_.seed + static_cast<std::uint64_t>(steps_));
  ksbd_ = ksbd(current_, direction_, objective_.problem().kernel);
}

const StepRecord& SinkhornDescent::step() {
  const auto start = std::chrono::steady_clock::now();
  const Box& box = objective_.problem().domain;
  const double slack = acceptance_slack(objective_.sinkhorn());

  double eta = cfg_.step_size;
  int sweeps = 0;
  for (int attempt = 0;; ++attempt) {
    Matrix moved = current_.points() - eta * direction_.ds;
    box.clamp_rows(moved);
    DiscreteMeasure candidate = current_.with_points(std::move(moved));
    BarycenterObjective::Evaluation trial = objective_.evaluate(candidate, &eval_.potentials);
    sweeps += trial.potentials.sweeps;
    if (!cfg_.backtracking || trial.objective <= eval_.objective + slack) {
      current_ = std::move(candidate);
      eval_ = std::move(trial);
      break;
    }
    if (attempt == kMaxHalvings) {
      throw DescentFailure(ErrorKind::BacktrackingFailed,
                           "no decrease of the objective after " + std::to_string(kMaxHalvings) +
                               " step halvings at step " + std::to_string(steps_),
                           current_, trace_);
    }
    eta *= 0.5;
  }
  ++steps_;
  refresh_direction();

  StepRecord r;
  r.objective = eval_.objective;
  r.ksbd = ksbd_;
  r.step_size = eta;
  r.sinkhorn_sweeps = sweeps;
  r.wall_ms = elapsed_ms(start);
  trace_.records.push_back(r);
  return trace_.records.back();
}

void SinkhornDescent::run(const StepObserver& observer) {
  while (steps_ < cfg_.max_steps && ksbd_ > cfg_.ksbd_stop) {
    try {
      const StepRecord& r = step();
      if (observer) observer(steps_, r);
    } catch (const DescentFailure&) {
      throw;
    } catch (const Error& e) {
      throw DescentFailure(e.kind(), "step " + std::to_string(steps_) + ": " + e.what(), current_, trace_);
    }
  }
}

StepResult sd_step(const DiscreteMeasure& alpha, const BarycenterProblem& problem, const DescentConfig& cfg) {
  SinkhornDescent sd(problem, cfg, alpha);
  StepRecord r = sd.step();
  return StepResult{sd.current(), r};
}

DescentResult run_sd(const DiscreteMeasure& initial, const BarycenterProblem& problem, const DescentConfig& cfg,
                     const StepObserver& observer) {
  SinkhornDescent sd(problem, cfg, initial);
  sd.run(observer);
  return DescentResult{sd.current(), sd.trace()};
}

double default_step_size(const BarycenterProblem& problem, int dim) {
  const double gc = problem.cost.lipschitz();
  const double lc = problem.cost.smoothness();
  const double mc = problem.cost.bound();
  const double gamma = problem.gamma;
  const double lf = 4.0 * gc * gc / gamma + lc;
  const double lt = 2.0 * gc * gc * std::exp(3.0 * mc / gamma) / gamma;
  const double eta = std::min(1.0 / (8.0 * lf), 1.0 / (8.0 * std::sqrt(static_cast<double>(dim)) * lt));
  return std::max(eta, 1e-12);
}

}  // namespace sinkdesc
