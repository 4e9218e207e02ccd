#include "sinkdesc/frank_wolfe.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace sinkdesc {

namespace {

constexpr int kMaxGridDim = 3;

void require_grid_dim(int d) {
  if (d > kMaxGridDim) {
    throw Error(ErrorKind::DimensionTooHigh, "grid search limited to d ≤ 3 (got d = " + std::to_string(d) + ")");
  }
}

}  // namespace

void FwConfig::validate() const {
  if (grid_resolution < 2) throw Error(ErrorKind::InvalidArgument, "grid resolution must be at least 2");
  if (steps < 0) throw Error(ErrorKind::InvalidArgument, "steps must be nonnegative");
  sinkhorn.validate();
}

double fw_weight(WeightRule rule, int t) {
  return rule == WeightRule::Harmonic ? 1.0 / (t + 1.0) : 2.0 / (t + 2.0);
}

Matrix uniform_grid(const Box& box, int resolution) {
  if (resolution < 2) throw Error(ErrorKind::InvalidArgument, "grid resolution must be at least 2");
  const int d = box.dim();
  require_grid_dim(d);
  Eigen::Index total = 1;
  for (int k = 0; k < d; ++k) total *= resolution;
  Matrix grid(total, d);
  for (Eigen::Index p = 0; p < total; ++p) {
    Eigen::Index rest = p;
    for (int k = 0; k < d; ++k) {
      const auto step = static_cast<double>(rest % resolution);
      rest /= resolution;
      grid(p, k) = box.lower[k] + (box.upper[k] - box.lower[k]) * step / (resolution - 1);
    }
  }
  return grid;
}

Linearization fw_linearization(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                               const Matrix& grid_points, const BarycenterPotentials& potentials) {
  require_grid_dim(alpha.dim());
  if (grid_points.cols() != alpha.dim()) throw Error(ErrorKind::DimensionMismatch, "grid dimension mismatch");
  if (grid_points.rows() == 0) throw Error(ErrorKind::EmptySupport, "empty grid");
  const double gamma = problem.gamma;

  Vector q = Vector::Zero(grid_points.rows());
  for (std::size_t k = 0; k < problem.sources.size(); ++k) {
    const SinkhornPotentials& pot = potentials.sources[k];
    // f(x) = A(g, beta)(x) with g = A(f, alpha) on supp(beta).
    const Vector g = sinkhorn_map(pot.f, alpha, problem.sources[k].points(), problem.cost, gamma);
    q += sinkhorn_map(g, problem.sources[k], grid_points, problem.cost, gamma);
  }
  q /= static_cast<double>(problem.sources.size());
  q -= sinkhorn_map(potentials.self.f, alpha, grid_points, problem.cost, gamma);

  Linearization out;
  out.argmin_index = 0;
  for (Eigen::Index p = 1; p < q.size(); ++p) {
    if (q[p] < q[out.argmin_index]) out.argmin_index = p;
  }
  out.argmin = grid_points.row(out.argmin_index).transpose();
  out.values = std::move(q);
  return out;
}

Linearization fw_linearization(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                               const Matrix& grid_points, const SinkhornConfig& cfg) {
  require_grid_dim(alpha.dim());
  return fw_linearization(alpha, problem, grid_points, solve_barycenter_potentials(alpha, problem, cfg));
}

namespace {

// (1 - rho) alpha + rho delta_x, merging x into an identical atom when one exists.
DiscreteMeasure mix_in_atom(const DiscreteMeasure& alpha, const Vector& x, double rho) {
  Vector w = (1.0 - rho) * alpha.weights();
  for (int i = 0; i < alpha.size(); ++i) {
    if (alpha.points().row(i) == x.transpose()) {
      w[i] += rho;
      return DiscreteMeasure(alpha.points(), std::move(w));
    }
  }
  Matrix pts(alpha.size() + 1, alpha.dim());
  pts.topRows(alpha.size()) = alpha.points();
  pts.row(alpha.size()) = x.transpose();
  Vector grown(alpha.size() + 1);
  grown.head(alpha.size()) = w;
  grown[alpha.size()] = rho;
  return DiscreteMeasure(std::move(pts), std::move(grown));
}

}  // namespace

DescentResult run_fw(const DiscreteMeasure& initial, const BarycenterProblem& problem, const FwConfig& cfg,
                     const StepObserver& observer) {
  cfg.validate();
  problem.validate();
  require_grid_dim(problem.dim());
  if (initial.dim() != problem.dim()) throw Error(ErrorKind::DimensionMismatch, "initial measure dimension mismatch");

  const BarycenterObjective objective(problem, cfg.sinkhorn);
  const Matrix grid = uniform_grid(problem.domain, cfg.grid_resolution);
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  DescentResult result{initial, {}};
  auto start = std::chrono::steady_clock::now();
  BarycenterObjective::Evaluation eval = objective.evaluate(result.final);
  result.trace.records.push_back(
      {eval.objective, kNaN, 0.0, eval.potentials.sweeps,
       std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()});

  for (int t = 1; t <= cfg.steps; ++t) {
    start = std::chrono::steady_clock::now();
    try {
      const Linearization lin = fw_linearization(result.final, problem, grid, eval.potentials);
      const double rho = fw_weight(cfg.weight_rule, t);
      result.final = mix_in_atom(result.final, lin.argmin, rho);
      eval = objective.evaluate(result.final);
      result.trace.records.push_back(
          {eval.objective, kNaN, rho, eval.potentials.sweeps,
           std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()});
      if (observer) observer(t, result.trace.records.back());
    } catch (const Error& e) {
      throw DescentFailure(e.kind(), "FW step " + std::to_string(t) + ": " + e.what(), result.final, result.trace);
    }
  }
  return result;
}

}  // namespace sinkdesc
