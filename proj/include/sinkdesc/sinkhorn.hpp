#pragma once

#include <cstdint>

#include "sinkdesc/measure.hpp"

namespace sinkdesc {

struct SinkhornConfig {
  double gamma = 1.0;
  /// Sup-norm change of f across one sweep at which the iteration stops.
  double tolerance = 1e-9;
  int max_iterations = 100000;
  /// Relaxation of the symmetric update f <- (1 - lambda) f + lambda A(f, alpha).
  double symmetric_damping = 0.5;

  void validate() const;
};

/// Dual potentials sampled on the two supports.
///
/// `f` is anchored so that f[0] = 0 for the asymmetric problem. For the
/// symmetric problem f and g hold the same vector and no anchor is applied.
struct SinkhornPotentials {
  Vector f;
  Vector g;
  double gamma = 0.0;
  int iterations_used = 0;
  double residual = 0.0;
  /// Dual objective <f, alpha> + <A(f, alpha), beta>; equals OT_gamma at optimality.
  double dual_value = 0.0;
};

/// Thrown when the fixed point is not reached; carries the last iterate.
class SinkhornNotConverged : public Error {
 public:
  SinkhornNotConverged(const std::string& message, SinkhornPotentials last)
      : Error(ErrorKind::MaxIterations, message), last_(std::move(last)) {}
  const SinkhornPotentials& last() const { return last_; }

 private:
  SinkhornPotentials last_;
};

/// Soft c-transform A(f, alpha)(y) = -gamma log sum_j w_j exp((f_j - c(x_j, y)) / gamma)
/// at every row of `query`, evaluated as a shifted log-sum-exp.
Vector sinkhorn_map(const Vector& f, const DiscreteMeasure& alpha, const Matrix& query, const GroundCost& cost,
                    double gamma);

/// Alternating log-domain fixed point for (f_{alpha,beta}, g_{alpha,beta}).
/// `warm`, when its sizes match, seeds the iteration.
SinkhornPotentials solve_potentials(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                    const GroundCost& cost, const SinkhornConfig& cfg,
                                    const SinkhornPotentials* warm = nullptr);

/// Damped fixed point f = A(f, alpha) for the self-transport problem.
SinkhornPotentials solve_symmetric_potential(const DiscreteMeasure& alpha, const GroundCost& cost,
                                             const SinkhornConfig& cfg, const SinkhornPotentials* warm = nullptr);

/// Identical measures are solved with the symmetric fixed point.
double ot_gamma(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const GroundCost& cost,
                const SinkhornConfig& cfg);

struct DivergenceTerms {
  double ot_ab = 0.0;
  double ot_aa = 0.0;
  double ot_bb = 0.0;
  double value = 0.0;  // ot_ab - ot_aa / 2 - ot_bb / 2
};

DivergenceTerms sinkhorn_divergence_terms(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                          const GroundCost& cost, const SinkhornConfig& cfg);
double sinkhorn_divergence(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const GroundCost& cost,
                           const SinkhornConfig& cfg);

/// Gradient of f_{alpha,beta} at every support point of alpha.
///
/// The potential is extended off-support as f(x) = A(g, beta)(x) with
/// g = A(f, alpha) recomputed on supp(beta); the gradient is the h-weighted
/// average of grad_1 c(x, y) over beta. `minibatch` > 0 replaces beta by a
/// seeded subsample of that many atoms.
Matrix potential_gradient(const SinkhornPotentials& pot, const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                          const GroundCost& cost, int minibatch = 0, std::uint64_t seed = 0);

/// sum_j w_j h(x_i, y_j) for each atom x_i of alpha; one at exact optimality.
Vector transport_row_mass(const SinkhornPotentials& pot, const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                          const GroundCost& cost);

}  // namespace sinkdesc
