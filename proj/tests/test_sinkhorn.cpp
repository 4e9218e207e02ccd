#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sinkdesc/sinkhorn.hpp"

using namespace sinkdesc;

namespace {

const GroundCost kCost(CostKind::SquaredEuclideanHalf, 2.0);

SinkhornConfig tight(double gamma, double tol = 1e-10) { return SinkhornConfig{gamma, tol, 200000, 0.5}; }

DiscreteMeasure dirac(std::initializer_list<double> x) {
  Matrix p(1, static_cast<Eigen::Index>(x.size()));
  Eigen::Index k = 0;
  for (double v : x) p(0, k++) = v;
  return DiscreteMeasure(p);
}

DiscreteMeasure line(std::initializer_list<double> xs, std::optional<Vector> w = std::nullopt) {
  Matrix p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double v : xs) p(i++, 0) = v;
  return DiscreteMeasure(p, std::move(w));
}

double sup(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("sinkhorn map on a single atom is the cost") {
  const DiscreteMeasure a = dirac({0.3, -0.2});
  Matrix q(3, 2);
  q << 0.0, 0.0, 1.0, 1.0, -0.5, 0.7;
  const Vector out = sinkhorn_map(Vector::Zero(1), a, q, kCost, 0.37);
  for (int i = 0; i < 3; ++i) {
    const double expected = kCost.value(a.point(0), std::span<const double>(q.data() + 2 * i, 2));
    CHECK(out[i] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("sinkhorn map shifts against constant potential shifts") {
  std::mt19937_64 rng(1);
  const DiscreteMeasure a = oracle::random_measure(rng, 6, 2, -1.0, 1.0);
  const Matrix q = oracle::random_points(rng, 5, 2, -1.0, 1.0);
  const Vector f = Vector::Random(6);
  const Vector base = sinkhorn_map(f, a, q, kCost, 0.2);
  const Vector shifted = sinkhorn_map((f.array() + 1.75).matrix(), a, q, kCost, 0.2);
  CHECK(sup(shifted - (base.array() - 1.75).matrix()) <= 1e-12);
}

TEST_CASE("sinkhorn map two-point value") {
  const DiscreteMeasure a = line({0.0, 1.0});
  Matrix q = Matrix::Zero(1, 1);
  const double v = sinkhorn_map(Vector::Zero(2), a, q, kCost, 1.0)[0];
  CHECK(v == doctest::Approx(-std::log((1.0 + std::exp(-0.5)) / 2.0)).epsilon(1e-14));
}

TEST_CASE("sinkhorn map is stable for tiny gamma") {
  std::mt19937_64 rng(2);
  const DiscreteMeasure a = oracle::random_measure(rng, 20, 2, 0.0, 1.0);
  const Matrix q = oracle::random_points(rng, 20, 2, 0.0, 1.0);
  const Vector out = sinkhorn_map(Vector::Zero(20), a, q, kCost, 1e-4);
  CHECK(out.allFinite());
  // As gamma -> 0 the soft transform approaches min_j c(x_j, y) - gamma log w_j.
  for (int i = 0; i < 20; ++i) {
    double best = INFINITY;
    for (int j = 0; j < 20; ++j) best = std::min(best, kCost.value(a.point(j), std::span<const double>(q.data() + 2 * i, 2)));
    CHECK(out[i] >= best - 1e-12);
    CHECK(out[i] <= best + 1e-4 * std::log(20.0 / a.weights().minCoeff()) + 1e-12);
  }
  CHECK_THROWS_AS(sinkhorn_map(Vector::Constant(20, NAN), a, q, kCost, 1.0), Error);
}

TEST_CASE("single atoms: potentials, ot and divergence") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const DiscreteMeasure x = dirac({u(rng), u(rng)});
    const DiscreteMeasure y = dirac({u(rng), u(rng)});
    const double c = kCost.value(x.point(0), y.point(0));
    const double gamma = std::pow(10.0, u(rng) * 2.0);
    const SinkhornPotentials p = solve_potentials(x, y, kCost, tight(gamma));
    CHECK(p.f[0] == 0.0);
    CHECK(p.g[0] == doctest::Approx(c).epsilon(1e-12));
    CHECK(ot_gamma(x, y, kCost, tight(gamma)) == doctest::Approx(c).epsilon(1e-12));
    CHECK(std::abs(ot_gamma(x, x, kCost, tight(gamma))) <= 1e-12);
    CHECK(sinkhorn_divergence(x, y, kCost, tight(gamma)) == doctest::Approx(c).epsilon(1e-12));
    const SinkhornPotentials s = solve_symmetric_potential(x, kCost, tight(gamma));
    CHECK(std::abs(s.f[0]) <= 1e-10);
  }
}

TEST_CASE("asymmetric solver on alpha = beta agrees with the symmetric solver") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const DiscreteMeasure a = oracle::random_measure(rng, 12, 2, -1.0, 1.0);
    const SinkhornConfig cfg = tight(0.1 + 0.2 * trial, 1e-10);
    const double asym = solve_potentials(a, a, kCost, cfg).dual_value;
    const double sym = solve_symmetric_potential(a, kCost, cfg).dual_value;
    CHECK(std::abs(asym - sym) <= 2 * cfg.tolerance);
  }
}

TEST_CASE("two-point problems converge to tight residuals") {
  const DiscreteMeasure a = line({0.0, 1.0});
  const SinkhornConfig cfg = tight(1.0, 1e-10);
  const SinkhornPotentials p = solve_potentials(a, a, kCost, cfg);
  CHECK(sup(p.f - sinkhorn_map(p.g, a, a.points(), kCost, 1.0)) <= 1e-10);
  CHECK(sup(p.g - sinkhorn_map(p.f, a, a.points(), kCost, 1.0)) <= 1e-10);
  const SinkhornPotentials s = solve_symmetric_potential(a, kCost, cfg);
  CHECK(s.residual <= 1e-10);
  CHECK(sup(s.f - sinkhorn_map(s.f, a, a.points(), kCost, 1.0)) <= 1e-10);
}

TEST_CASE("ot_gamma matches the primal brute force on 2x2 problems") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> uw(0.1, 0.9);
  for (int trial = 0; trial < 20; ++trial) {
    const double gamma = 0.1 + std::abs(u(rng)) * 2.0;
    const DiscreteMeasure a = line({u(rng), u(rng)}, Vector{{uw(rng), 0.0}});
    Vector wa{{uw(rng), 0.0}};
    wa[1] = 1.0 - wa[0];
    Vector wb{{uw(rng), 0.0}};
    wb[1] = 1.0 - wb[0];
    const DiscreteMeasure alpha(a.points(), wa);
    const DiscreteMeasure beta = line({u(rng), u(rng)}, wb);
    double c[2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c[i][j] = kCost.value(alpha.point(i), beta.point(j));
    const double primal = oracle::primal_ot_2x2(alpha.weights(), beta.weights(), c, gamma);
    CHECK(std::abs(ot_gamma(alpha, beta, kCost, tight(gamma, 1e-12)) - primal) <= 1e-8);
  }
}

TEST_CASE("uniform two-point measures against the primal oracle") {
  const DiscreteMeasure a = line({0.0, 1.0});
  const double c[2][2] = {{0.0, 0.5}, {0.5, 0.0}};
  const double primal = oracle::primal_ot_2x2(a.weights(), a.weights(), c, 1.0);
  CHECK(std::abs(ot_gamma(a, a, kCost, tight(1.0, 1e-12)) - primal) <= 1e-8);
}

TEST_CASE("divergence properties on random measures") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const DiscreteMeasure a = oracle::random_measure(rng, 10, 2, -1.0, 1.0);
    const DiscreteMeasure b = oracle::random_measure(rng, 10, 2, -1.0, 1.0);
    const SinkhornConfig cfg = tight(0.05 + 0.1 * trial);
    const double ab = sinkhorn_divergence(a, b, kCost, cfg);
    const double ba = sinkhorn_divergence(b, a, kCost, cfg);
    CHECK(ab >= -10 * cfg.tolerance * kCost.bound());
    CHECK(std::abs(ab - ba) <= 1e-8);
    CHECK(std::abs(sinkhorn_divergence(a, a, kCost, cfg)) <= 4 * cfg.tolerance * kCost.bound());
  }
}

TEST_CASE("divergence terms satisfy the debiasing identity") {
  std::mt19937_64 rng(7);
  const DiscreteMeasure a = oracle::random_measure(rng, 8, 3, -1.0, 1.0);
  const DiscreteMeasure b = oracle::random_measure(rng, 9, 3, -1.0, 1.0);
  const DivergenceTerms t = sinkhorn_divergence_terms(a, b, kCost, tight(0.3));
  CHECK(t.value == t.ot_ab - 0.5 * t.ot_aa - 0.5 * t.ot_bb);
}

TEST_CASE("euclidean cost divergence") {
  const GroundCost eu(CostKind::Euclidean, 2.0);
  const DiscreteMeasure x = dirac({0.0, 0.0});
  const DiscreteMeasure y = dirac({0.6, 0.8});
  CHECK(sinkhorn_divergence(x, y, eu, tight(0.5)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("potential bounds, lipschitz extension and h normalization") {
  std::mt19937_64 rng(8);
  const Box box = Box::cube(2, 1.0);
  const GroundCost cost = GroundCost::for_box(CostKind::SquaredEuclideanHalf, box);
  for (int trial = 0; trial < 20; ++trial) {
    const DiscreteMeasure a = oracle::random_measure(rng, 15, 2, -1.0, 1.0);
    const DiscreteMeasure b = oracle::random_measure(rng, 11, 2, -1.0, 1.0);
    const SinkhornConfig cfg = tight(0.05 + 0.25 * trial, 1e-10);
    const SinkhornPotentials p = solve_potentials(a, b, cost, cfg);
    CHECK(sup(p.f) <= 2 * cost.bound() + 10 * cfg.tolerance);
    CHECK(sup(p.g) <= 2 * cost.bound() + 10 * cfg.tolerance);
    CHECK(sup(p.f - sinkhorn_map(p.g, b, a.points(), cost, cfg.gamma)) <= 2 * cfg.tolerance);
    CHECK(sup(p.g - sinkhorn_map(p.f, a, b.points(), cost, cfg.gamma)) <= 2 * cfg.tolerance);
    const Vector mass = transport_row_mass(p, a, b, cost);
    // The row mass error is the next sweep's change of f divided by gamma.
    if (cfg.gamma >= 0.1) CHECK(sup((mass.array() - 1.0).matrix()) <= 10 * cfg.tolerance);
    CHECK(sup((mass.array() - 1.0).matrix()) <= 10 * cfg.tolerance / std::min(cfg.gamma, 1.0));

    const Matrix probes = oracle::random_points(rng, 30, 2, -1.0, 1.0);
    const Vector fx = sinkhorn_map(p.g, b, probes, cost, cfg.gamma);
    for (int i = 0; i < 30; ++i)
      for (int j = 0; j < 30; ++j)
        CHECK(std::abs(fx[i] - fx[j]) <= cost.lipschitz() * (probes.row(i) - probes.row(j)).norm() + 10 * cfg.tolerance);

    const Matrix grad = potential_gradient(p, a, b, cost);
    CHECK(grad.rowwise().norm().maxCoeff() <= cost.lipschitz() + 1e-12);
  }
}

TEST_CASE("potential gradient against a single atom is the cost gradient") {
  std::mt19937_64 rng(9);
  const DiscreteMeasure a = oracle::random_measure(rng, 5, 2, -1.0, 1.0);
  const DiscreteMeasure y = dirac({0.25, -0.5});
  const SinkhornPotentials p = solve_potentials(a, y, kCost, tight(0.4));
  const Matrix grad = potential_gradient(p, a, y, kCost);
  for (int i = 0; i < 5; ++i) {
    double dc[2];
    kCost.gradient(a.point(i), y.point(0), dc);
    CHECK(grad(i, 0) == doctest::Approx(dc[0]).epsilon(1e-14));
    CHECK(grad(i, 1) == doctest::Approx(dc[1]).epsilon(1e-14));
  }
}

TEST_CASE("potential gradient matches finite differences of the extension") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const DiscreteMeasure a = line({u(rng), u(rng)}, oracle::random_weights(rng, 2));
    const DiscreteMeasure b = line({u(rng), u(rng)}, oracle::random_weights(rng, 2));
    const double gamma = 0.2 + std::abs(u(rng));
    const SinkhornPotentials p = solve_potentials(a, b, kCost, tight(gamma, 1e-12));
    const Matrix grad = potential_gradient(p, a, b, kCost);
    const Vector g = sinkhorn_map(p.f, a, b.points(), kCost, gamma);
    const double h = 1e-5;
    for (int i = 0; i < 2; ++i) {
      Matrix q(2, 1);
      q << a.points()(i, 0) + h, a.points()(i, 0) - h;
      const Vector fx = sinkhorn_map(g, b, q, kCost, gamma);
      const double fd = (fx[0] - fx[1]) / (2 * h);
      CHECK(oracle::close_rel(grad(i, 0), fd, 1e-5, 1e-9));
    }
  }
}

TEST_CASE("gradient is invariant to constant shifts of the potential") {
  std::mt19937_64 rng(11);
  const DiscreteMeasure a = oracle::random_measure(rng, 7, 2, -1.0, 1.0);
  const DiscreteMeasure b = oracle::random_measure(rng, 9, 2, -1.0, 1.0);
  SinkhornPotentials p = solve_potentials(a, b, kCost, tight(0.3));
  const Matrix base = potential_gradient(p, a, b, kCost);
  p.f.array() += 3.5;
  p.g.array() -= 3.5;
  CHECK((potential_gradient(p, a, b, kCost) - base).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ot_gamma is invariant to splitting an atom") {
  std::mt19937_64 rng(12);
  const DiscreteMeasure a = oracle::random_measure(rng, 6, 2, -1.0, 1.0);
  const DiscreteMeasure b = oracle::random_measure(rng, 5, 2, -1.0, 1.0);
  Matrix pts(7, 2);
  pts.topRows(6) = a.points();
  pts.row(6) = a.points().row(2);
  Vector w(7);
  w.head(6) = a.weights();
  w[2] *= 0.3;
  w[6] = a.weights()[2] * 0.7;
  const DiscreteMeasure split(pts, w);
  const SinkhornConfig cfg = tight(0.25);
  CHECK(std::abs(ot_gamma(a, b, kCost, cfg) - ot_gamma(split, b, kCost, cfg)) <= 10 * cfg.tolerance);
  CHECK(std::abs(sinkhorn_divergence(a, b, kCost, cfg) - sinkhorn_divergence(split, b, kCost, cfg)) <=
        10 * cfg.tolerance);
}

TEST_CASE("symmetric potential is translation invariant") {
  std::mt19937_64 rng(13);
  const DiscreteMeasure a = oracle::random_measure(rng, 10, 2, -0.5, 0.5);
  const DiscreteMeasure moved = a.with_points(a.points().array() + 0.3);
  const SinkhornConfig cfg = tight(0.2);
  const SinkhornPotentials p = solve_symmetric_potential(a, kCost, cfg);
  const SinkhornPotentials q = solve_symmetric_potential(moved, kCost, cfg);
  CHECK(sup(p.f - q.f) <= 1e-8);
}

TEST_CASE("non-convergence reports the last iterate") {
  std::mt19937_64 rng(14);
  const DiscreteMeasure a = oracle::random_measure(rng, 10, 2, -1.0, 1.0);
  const DiscreteMeasure b = oracle::random_measure(rng, 10, 2, -1.0, 1.0);
  SinkhornConfig cfg = tight(0.01, 1e-14);
  cfg.max_iterations = 3;
  try {
    solve_potentials(a, b, kCost, cfg);
    FAIL("expected non-convergence");
  } catch (const SinkhornNotConverged& e) {
    CHECK(e.kind() == ErrorKind::MaxIterations);
    CHECK(e.last().iterations_used == 3);
    CHECK(e.last().f.size() == 10);
    CHECK(e.last().residual > cfg.tolerance);
  }
  CHECK_THROWS_AS(solve_symmetric_potential(a, kCost, cfg), SinkhornNotConverged);
}

TEST_CASE("warm start reduces work and keeps the answer") {
  std::mt19937_64 rng(15);
  const DiscreteMeasure a = oracle::random_measure(rng, 30, 2, -1.0, 1.0);
  const DiscreteMeasure b = oracle::random_measure(rng, 30, 2, -1.0, 1.0);
  const SinkhornConfig cfg = tight(0.1, 1e-9);
  const SinkhornPotentials cold = solve_potentials(a, b, kCost, cfg);
  const SinkhornPotentials warm = solve_potentials(a, b, kCost, cfg, &cold);
  CHECK(warm.iterations_used <= 2);
  CHECK(std::abs(warm.dual_value - cold.dual_value) <= 1e-8);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(SinkhornConfig({0.0, 1e-6, 10, 0.5}).validate(), Error);
  CHECK_THROWS_AS(SinkhornConfig({1.0, 0.0, 10, 0.5}).validate(), Error);
  CHECK_THROWS_AS(SinkhornConfig({1.0, 1e-6, 0, 0.5}).validate(), Error);
  CHECK_THROWS_AS(SinkhornConfig({1.0, 1e-6, 10, 0.0}).validate(), Error);
  CHECK_NOTHROW(SinkhornConfig({1.0, 1e-6, 10, 1.0}).validate());
}

TEST_CASE("identical measures use the symmetric solver") {
  std::mt19937_64 rng(12);
  const DiscreteMeasure a = oracle::random_measure(rng, 26, 3, -1.0, 1.0);
  const GroundCost cost = GroundCost::for_box(CostKind::SquaredEuclideanHalf, Box::cube(3, 1.0));
  const SinkhornConfig cfg = tight(0.05, 1e-9);
  const double self = solve_symmetric_potential(a, cost, cfg).dual_value;
  CHECK(ot_gamma(a, a, cost, cfg) == self);
  const DivergenceTerms t = sinkhorn_divergence_terms(a, a, cost, cfg);
  CHECK(t.ot_ab == self);
  CHECK(t.value == 0.0);
  const DiscreteMeasure copy(a.points(), a.weights());
  CHECK(sinkhorn_divergence(a, copy, cost, cfg) == 0.0);
}
