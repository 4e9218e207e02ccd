#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sinkdesc/measure.hpp"
#include "sinkdesc/sinkhorn.hpp"

namespace sinkdesc {

/// Sources beta_1..beta_n together with the cost, kernel and regularization.
struct BarycenterProblem {
  std::vector<DiscreteMeasure> sources;
  GroundCost cost;
  RbfKernel kernel;
  double gamma;
  /// Particles are kept inside this box.
  Box domain;

  int dim() const { return sources.front().dim(); }
  int num_sources() const { return static_cast<int>(sources.size()); }
  void validate() const;
};

struct DescentConfig {
  double step_size = 0.1;
  int max_steps = 30;
  /// Stop as soon as KSBD falls to this value.
  double ksbd_stop = 0.0;
  bool backtracking = true;
  SinkhornConfig sinkhorn{1.0, 1e-6, 100000, 0.5};
  std::uint64_t seed = 0;
  /// Per-source subsample size for the potential gradients; 0 uses every atom.
  int minibatch = 0;

  void validate() const;
};

struct StepRecord {
  double objective = 0.0;
  double ksbd = 0.0;
  /// Step that produced this state (0 for the initial state).
  double step_size = 0.0;
  int sinkhorn_sweeps = 0;
  double wall_ms = 0.0;
};

/// One record per state, the initial state included.
struct DescentTrace {
  std::vector<StepRecord> records;

  int steps_completed() const { return records.empty() ? 0 : static_cast<int>(records.size()) - 1; }
};

/// Called after every completed step with the step index and its record.
using StepObserver = std::function<void(int, const StepRecord&)>;

std::string format_trace_csv(const DescentTrace& trace);
DescentTrace parse_trace_csv(const std::string& text);

struct DescentDirection {
  /// xi(x_i) = (1/n) sum_k grad f_{alpha,beta_k}(x_i) - grad f_{alpha,alpha}(x_i)
  Matrix xi;
  /// Kernel-smoothed xi: ds(y_i) = sum_j w_j xi(x_j) k(x_j, y_i).
  Matrix ds;
};

/// Potentials of the n source problems and of the self problem at one measure.
struct BarycenterPotentials {
  std::vector<SinkhornPotentials> sources;
  SinkhornPotentials self;
  int sweeps = 0;
};

BarycenterPotentials solve_barycenter_potentials(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                                 const SinkhornConfig& cfg,
                                                 const BarycenterPotentials* warm = nullptr);

DescentDirection assemble_direction(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                    const BarycenterPotentials& potentials, int minibatch = 0,
                                    std::uint64_t seed = 0);

/// Frechet derivative of the barycenter objective at alpha, in the RKHS of `problem.kernel`.
DescentDirection functional_gradient(const DiscreteMeasure& alpha, const BarycenterProblem& problem,
                                     const SinkhornConfig& cfg, const BarycenterPotentials* warm = nullptr);

/// Squared RKHS norm sum_{i,j} w_i w_j <xi_i, xi_j> k(x_i, x_j), clamped at zero.
double ksbd(const DiscreteMeasure& alpha, const DescentDirection& direction, const RbfKernel& kernel);

/// Evaluates S_gamma(alpha) = (1/n) sum_k S_gamma(alpha, beta_k).
/// The source self terms are solved once at construction. Holds a reference to `problem`.
class BarycenterObjective {
 public:
  BarycenterObjective(const BarycenterProblem& problem, const SinkhornConfig& cfg);

  struct Evaluation {
    double objective = 0.0;
    BarycenterPotentials potentials;
  };

  Evaluation evaluate(const DiscreteMeasure& alpha, const BarycenterPotentials* warm = nullptr) const;
  double value(const DiscreteMeasure& alpha) const { return evaluate(alpha).objective; }
  double objective_from(const BarycenterPotentials& potentials, const DiscreteMeasure& alpha) const;

  const BarycenterProblem& problem() const { return problem_; }
  const SinkhornConfig& sinkhorn() const { return cfg_; }
  /// (1/2n) sum_k OT_gamma(beta_k, beta_k)
  double source_self_term() const { return source_self_term_; }

 private:
  const BarycenterProblem& problem_;
  SinkhornConfig cfg_;
  double source_self_term_ = 0.0;
};

struct StepResult {
  DiscreteMeasure next;
  StepRecord record;
};

/// Backtracking failed, or a later step failed; carries the progress made so far.
class DescentFailure : public Error {
 public:
  DescentFailure(ErrorKind kind, const std::string& message, DiscreteMeasure last, DescentTrace trace)
      : Error(kind, message), last_(std::move(last)), trace_(std::move(trace)) {}
  const DiscreteMeasure& last() const { return last_; }
  const DescentTrace& trace() const { return trace_; }

 private:
  DiscreteMeasure last_;
  DescentTrace trace_;
};

/// Particle state for Sinkhorn Descent; each step warm-starts from the previous potentials.
class SinkhornDescent {
 public:
  SinkhornDescent(const BarycenterProblem& problem, const DescentConfig& cfg, DiscreteMeasure initial);

  const DiscreteMeasure& current() const { return current_; }
  double objective() const { return eval_.objective; }
  double current_ksbd() const { return ksbd_; }
  const DescentDirection& direction() const { return direction_; }
  const DescentTrace& trace() const { return trace_; }
  int steps_taken() const { return steps_; }

  /// Moves every particle along -eta * ds and appends a record.
  const StepRecord& step();
  /// Steps until KSBD <= ksbd_stop or max_steps is reached.
  void run(const StepObserver& observer = {});

 private:
  void refresh_direction();

  BarycenterObjective objective_;
  DescentConfig cfg_;
  DiscreteMeasure current_;
  BarycenterObjective::Evaluation eval_;
  DescentDirection direction_;
  double ksbd_ = 0.0;
  DescentTrace trace_;
  int steps_ = 0;
};

StepResult sd_step(const DiscreteMeasure& alpha, const BarycenterProblem& problem, const DescentConfig& cfg);

struct DescentResult {
  DiscreteMeasure final;
  DescentTrace trace;
};

DescentResult run_sd(const DiscreteMeasure& initial, const BarycenterProblem& problem, const DescentConfig& cfg,
                     const StepObserver& observer = {});

/// min{1/(8 L_f), 1/(8 sqrt(d) L_T)} with L_f = 4 G_c^2/gamma + L_c and
/// L_T = 2 G_c^2 exp(3 M_c/gamma)/gamma, taking M_H = 1 for the RBF kernel.
double default_step_size(const BarycenterProblem& problem, int dim);

}  // namespace sinkdesc
