#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "sinkdesc/descent.hpp"
#include "sinkdesc/measure.hpp"

namespace oracle {

using sinkdesc::DiscreteMeasure;
using sinkdesc::Matrix;
using sinkdesc::Vector;

// Golden-section minimization of a unimodal function on [lo, hi].
inline double golden_min(const std::function<double(double)>& fn, double lo, double hi, double tol = 1e-12) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c), fd = fn(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
  }
  const double x = 0.5 * (a + b);
  return std::min({fn(x), fn(lo), fn(hi)});
}

inline double xlogy(double p, double q) { return p > 0.0 ? p * std::log(p / q) : 0.0; }

// Primal entropic OT between two 2-atom measures: min <c, pi> + gamma KL(pi | a x b)
// over couplings, parameterized by pi_00 = p.
inline double primal_ot_2x2(const Vector& a, const Vector& b, const double c[2][2], double gamma) {
  const double lo = std::max(0.0, a[0] + b[0] - 1.0);
  const double hi = std::min(a[0], b[0]);
  auto objective = [&](double p) {
    const double pi[2][2] = {{p, a[0] - p}, {b[0] - p, 1.0 - a[0] - b[0] + p}};
    double total = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double q = std::max(pi[i][j], 0.0);
        total += q * c[i][j] + gamma * xlogy(q, a[i] * b[j]);
      }
    }
    return total;
  };
  return golden_min(objective, lo, hi);
}

// sum_{i,j} w_i w_j <xi_i, xi_j> k(x_i, x_j) by plain nested loops.
inline double naive_ksbd(const DiscreteMeasure& alpha, const Matrix& xi, double bandwidth) {
  const int n = alpha.size();
  const int d = alpha.dim();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dot = 0.0, dist2 = 0.0;
      for (int k = 0; k < d; ++k) {
        dot += xi(i, k) * xi(j, k);
        const double diff = alpha.points()(i, k) - alpha.points()(j, k);
        dist2 += diff * diff;
      }
      total += alpha.weights()[i] * alpha.weights()[j] * dot * std::exp(-dist2 / (2.0 * bandwidth * bandwidth));
    }
  }
  return total;
}

inline Matrix random_points(std::mt19937_64& rng, int n, int d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix p(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) p(i, k) = u(rng);
  return p;
}

inline Vector random_weights(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = u(rng);
  return w;
}

inline DiscreteMeasure random_measure(std::mt19937_64& rng, int n, int d, double lo, double hi) {
  Matrix p = random_points(rng, n, d, lo, hi);
  return DiscreteMeasure(std::move(p), random_weights(rng, n));
}

// Pushes alpha through x -> x + eps * phi(x), phi(x) = sum_j coef_j k(z_j, x).
inline DiscreteMeasure perturb(const DiscreteMeasure& alpha, const Matrix& centers, const Matrix& coefs,
                               const sinkdesc::RbfKernel& kernel, double eps) {
  const Matrix k = kernel.gram(alpha.points(), centers);
  Matrix moved = alpha.points() + eps * (k * coefs);
  return alpha.with_points(std::move(moved));
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

}  // namespace oracle
