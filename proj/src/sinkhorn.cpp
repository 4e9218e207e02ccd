#include "sinkdesc/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "numeric.hpp"

namespace sinkdesc {

void SinkhornConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::InvalidArgument, "max_iterations must be at least 1");
  if (!(symmetric_damping > 0.0 && symmetric_damping <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "symmetric_damping must lie in (0, 1]");
  }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix cost_matrix(const Matrix& x, const Matrix& y, const GroundCost& cost) {
  if (x.cols() != y.cols()) throw Error(ErrorKind::DimensionMismatch, "measures live in different dimensions");
  Matrix c(x.rows(), y.rows());
  const auto d = static_cast<std::size_t>(x.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::span<const double> xi(x.data() + i * x.cols(), d);
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      c(i, j) = cost.value(xi, std::span<const double>(y.data() + j * y.cols(), d));
    }
  }
  return c;
}

// log sum_j exp(a_j - c_j / gamma), shifted by the maximum term.
double log_sum_exp_row(const double* a, const double* c, Eigen::Index m, double inv_gamma) {
  double top = kNegInf;
  for (Eigen::Index j = 0; j < m; ++j) top = std::max(top, a[j] - c[j] * inv_gamma);
  if (top == kNegInf) return kNegInf;
  detail::CompensatedSum s;
  for (Eigen::Index j = 0; j < m; ++j) s.add(std::exp(a[j] - c[j] * inv_gamma - top));
  return top + std::log(s.value());
}

// out_i = -gamma * log sum_j exp(potential_j / gamma + log w_j - c_ij / gamma), rows of `c` indexed by i.
void soft_transform(const Matrix& c, const Vector& potential, const Vector& log_weights, double gamma, Vector& out) {
  const double inv_gamma = 1.0 / gamma;
  Vector a = potential * inv_gamma + log_weights;
  out.resize(c.rows());
  const Eigen::Index m = c.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    out[i] = -gamma * log_sum_exp_row(a.data(), c.data() + i * m, m, inv_gamma);
  }
}

Vector log_of(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? std::log(w[i]) : kNegInf;
  return out;
}

double weighted_sum(const Vector& w, const Vector& v) {
  return detail::compensated_dot({w.data(), static_cast<std::size_t>(w.size())},
                                 {v.data(), static_cast<std::size_t>(v.size())});
}

double sup_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

}  // namespace

Vector sinkhorn_map(const Vector& f, const DiscreteMeasure& alpha, const Matrix& query, const GroundCost& cost,
                    double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  if (f.size() != alpha.size()) throw Error(ErrorKind::DimensionMismatch, "potential length does not match support");
  if (!f.allFinite() || !query.allFinite()) throw Error(ErrorKind::NonFinite, "sinkhorn_map inputs must be finite");
  const Matrix c = cost_matrix(query, alpha.points(), cost);
  Vector out;
  soft_transform(c, f, log_of(alpha.weights()), gamma, out);
  return out;
}

SinkhornPotentials solve_potentials(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                    const GroundCost& cost, const SinkhornConfig& cfg,
                                    const SinkhornPotentials* warm) {
  cfg.validate();
  const Matrix c = cost_matrix(alpha.points(), beta.points(), cost);
  const Matrix ct = c.transpose();
  const Vector log_a = log_of(alpha.weights());
  const Vector log_b = log_of(beta.weights());

  SinkhornPotentials pot;
  pot.gamma = cfg.gamma;
  pot.f = Vector::Zero(alpha.size());
  if (warm != nullptr && warm->f.size() == alpha.size() && warm->f.allFinite()) pot.f = warm->f;
  soft_transform(ct, pot.f, log_a, cfg.gamma, pot.g);

  Vector next;
  bool converged = false;
  while (pot.iterations_used < cfg.max_iterations) {
    soft_transform(c, pot.g, log_b, cfg.gamma, next);
    require_finite(next, "potential f");
    pot.residual = sup_diff(next, pot.f);
    pot.f.swap(next);
    soft_transform(ct, pot.f, log_a, cfg.gamma, pot.g);
    require_finite(pot.g, "potential g");
    ++pot.iterations_used;
    if (pot.residual <= cfg.tolerance) {
      converged = true;
      break;
    }
  }

  const double anchor = pot.f[0];
  pot.f.array() -= anchor;
  pot.g.array() += anchor;
  pot.dual_value = weighted_sum(alpha.weights(), pot.f) + weighted_sum(beta.weights(), pot.g);
  if (!converged) {
    throw SinkhornNotConverged("Sinkhorn iteration stopped after " + std::to_string(pot.iterations_used) +
                                   " sweeps with residual " + std::to_string(pot.residual),
                               std::move(pot));
  }
  return pot;
}

SinkhornPotentials solve_symmetric_potential(const DiscreteMeasure& alpha, const GroundCost& cost,
                                             const SinkhornConfig& cfg, const SinkhornPotentials* warm) {
  cfg.validate();
  const Matrix c = cost_matrix(alpha.points(), alpha.points(), cost);
  const Vector log_a = log_of(alpha.weights());
  const double lambda = cfg.symmetric_damping;

  SinkhornPotentials pot;
  pot.gamma = cfg.gamma;
  pot.f = Vector::Zero(alpha.size());
  if (warm != nullptr && warm->f.size() == alpha.size() && warm->f.allFinite()) pot.f = warm->f;

  Vector mapped;
  bool converged = false;
  while (true) {
    soft_transform(c, pot.f, log_a, cfg.gamma, mapped);
    require_finite(mapped, "symmetric potential");
    pot.residual = sup_diff(pot.f, mapped);
    if (pot.residual <= cfg.tolerance) {
      converged = true;
      break;
    }
    if (pot.iterations_used >= cfg.max_iterations) break;
    pot.f = (1.0 - lambda) * pot.f + lambda * mapped;
    ++pot.iterations_used;
  }

  pot.g = pot.f;
  pot.dual_value = weighted_sum(alpha.weights(), pot.f) + weighted_sum(alpha.weights(), mapped);
  if (!converged) {
    throw SinkhornNotConverged("symmetric Sinkhorn iteration stopped after " +
                                   std::to_string(pot.iterations_used) + " sweeps with residual " +
                                   std::to_string(pot.residual),
                               std::move(pot));
  }
  return pot;
}

double ot_gamma(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const GroundCost& cost,
                const SinkhornConfig& cfg) {
  if (alpha == beta) return solve_symmetric_potential(alpha, cost, cfg).dual_value;
  return solve_potentials(alpha, beta, cost, cfg).dual_value;
}

DivergenceTerms sinkhorn_divergence_terms(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                          const GroundCost& cost, const SinkhornConfig& cfg) {
  DivergenceTerms t;
  if (alpha == beta) {
    t.ot_ab = t.ot_aa = t.ot_bb = solve_symmetric_potential(alpha, cost, cfg).dual_value;
    return t;
  }
  t.ot_ab = solve_potentials(alpha, beta, cost, cfg).dual_value;
  t.ot_aa = solve_symmetric_potential(alpha, cost, cfg).dual_value;
  t.ot_bb = solve_symmetric_potential(beta, cost, cfg).dual_value;
  t.value = t.ot_ab - 0.5 * t.ot_aa - 0.5 * t.ot_bb;
  return t;
}

double sinkhorn_divergence(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const GroundCost& cost,
                           const SinkhornConfig& cfg) {
  return sinkhorn_divergence_terms(alpha, beta, cost, cfg).value;
}

namespace {

DiscreteMeasure subsample(const DiscreteMeasure& beta, int count, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(beta.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, beta.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::sort(idx.begin(), idx.begin() + count);
  Matrix pts(count, beta.dim());
  Vector w(count);
  for (int i = 0; i < count; ++i) {
    pts.row(i) = beta.points().row(idx[static_cast<std::size_t>(i)]);
    w[i] = beta.weights()[idx[static_cast<std::size_t>(i)]];
  }
  if (!(w.sum() > 0.0)) w.setOnes();
  return DiscreteMeasure(std::move(pts), std::move(w));
}

}  // namespace

Matrix potential_gradient(const SinkhornPotentials& pot, const DiscreteMeasure& alpha, const DiscreteMeasure& beta_full,
                          const GroundCost& cost, int minibatch, std::uint64_t seed) {
  if (pot.f.size() != alpha.size()) throw Error(ErrorKind::DimensionMismatch, "potential does not match alpha");
  if (alpha.dim() != beta_full.dim()) throw Error(ErrorKind::DimensionMismatch, "measures live in different dimensions");
  if (!pot.f.allFinite()) throw Error(ErrorKind::NonFinite, "potential is not finite");

  const bool sampled = minibatch > 0 && minibatch < beta_full.size();
  const DiscreteMeasure beta = sampled ? subsample(beta_full, minibatch, seed) : beta_full;

  const double gamma = pot.gamma;
  const double inv_gamma = 1.0 / gamma;
  const Vector g = sinkhorn_map(pot.f, alpha, beta.points(), cost, gamma);
  const Matrix c = cost_matrix(alpha.points(), beta.points(), cost);
  const Vector a = g * inv_gamma + log_of(beta.weights());

  const int n = alpha.size();
  const int m = beta.size();
  const int d = alpha.dim();
  Matrix grad(n, d);
#pragma omp parallel
  {
    std::vector<double> dc(static_cast<std::size_t>(d));
    std::vector<detail::CompensatedSum> acc(static_cast<std::size_t>(d));
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const double* row = c.data() + static_cast<std::ptrdiff_t>(i) * m;
      double top = kNegInf;
      for (int j = 0; j < m; ++j) top = std::max(top, a[j] - row[j] * inv_gamma);
      std::fill(acc.begin(), acc.end(), detail::CompensatedSum{});
      detail::CompensatedSum mass;
      for (int j = 0; j < m; ++j) {
        const double p = std::exp(a[j] - row[j] * inv_gamma - top);
        if (p == 0.0) continue;
        mass.add(p);
        cost.gradient(alpha.point(i), beta.point(j), dc);
        for (int k = 0; k < d; ++k) acc[static_cast<std::size_t>(k)].add(p * dc[static_cast<std::size_t>(k)]);
      }
      const double total = mass.value();
      for (int k = 0; k < d; ++k) grad(i, k) = acc[static_cast<std::size_t>(k)].value() / total;
    }
  }
  if (!grad.allFinite()) throw Error(ErrorKind::NonFinite, "potential gradient is not finite");
  return grad;
}

Vector transport_row_mass(const SinkhornPotentials& pot, const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                          const GroundCost& cost) {
  const Vector g = sinkhorn_map(pot.f, alpha, beta.points(), cost, pot.gamma);
  const Vector extended = sinkhorn_map(g, beta, alpha.points(), cost, pot.gamma);
  // sum_j w_j exp((f_i + g_j - c_ij) / gamma) = exp((f_i - A(g, beta)(x_i)) / gamma)
  return ((pot.f - extended) / pot.gamma).array().exp().matrix();
}

}  // namespace sinkdesc
