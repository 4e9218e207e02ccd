#pragma once

#include "sinkdesc/descent.hpp"

namespace sinkdesc {

// Support-growing conditional gradient baseline. Each step adds the grid
// point minimizing the first variation of the objective.

enum class WeightRule {
  Harmonic,         // rho_t = 1 / (t + 1)
  TwoOverTPlusTwo,  // rho_t = 2 / (t + 2)
};

struct FwConfig {
  int grid_resolution = 64;
  int steps = 100;
  WeightRule weight_rule = WeightRule::TwoOverTPlusTwo;
  SinkhornConfig sinkhorn{1.0, 1e-6, 100000, 0.5};

  void validate() const;
};

/// Mixing weight of step t (t = 1, 2, ...).
double fw_weight(WeightRule rule, int t);

/// Uniform lattice of `resolution` points per axis over the box, first axis fastest.
Matrix uniform_grid(const Box& box, int resolution);

struct Linearization {
  Vector argmin;
  Eigen::Index argmin_index = 0;
  Vector values;
};

/// Q(x) = (1/n) sum_k f_{alpha,beta_k}(x) - f_{alpha,alpha}(x) on every grid point,
/// each potential extended off-support through the Sinkhorn mapping.
Linearization fw_linearization(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                               const Matrix& grid_points, const SinkhornConfig& cfg);

/// Same, from already solved potentials at alpha.
Linearization fw_linearization(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                               const Matrix& grid_points, const BarycenterPotentials& potentials);

/// Trace records carry the objective; KSBD is not defined for this method and is recorded as NaN.
DescentResult run_fw(const DiscreteMeasure& initial, const BarycenterProblem& problem, const FwConfig& cfg,
                     const StepObserver& observer = {});

}  // namespace sinkdesc
