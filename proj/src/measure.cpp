#include "sinkdesc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace sinkdesc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptySupport: return "EmptySupport";
    case ErrorKind::NegativeWeight: return "NegativeWeight";
    case ErrorKind::ZeroMass: return "ZeroMass";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::OutsideDomain: return "OutsideDomain";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingleAtom: return "SingleAtom";
    case ErrorKind::AllBelowThreshold: return "AllBelowThreshold";
    case ErrorKind::DimensionTooHigh: return "DimensionTooHigh";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::BacktrackingFailed: return "BacktrackingFailed";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::NonFinite || kind == ErrorKind::MaxIterations ||
         kind == ErrorKind::BacktrackingFailed;
}

// ---------------------------------------------------------------------------
// Box

Box Box::cube(int dim, double half_width) {
  if (dim < 1 || !(half_width > 0.0) || !std::isfinite(half_width)) {
    throw Error(ErrorKind::InvalidArgument, "cube needs dim >= 1 and a positive finite half width");
  }
  return Box{Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
}

Box Box::bounding(const std::vector<const Matrix*>& points, double pad_fraction) {
  if (points.empty()) throw Error(ErrorKind::EmptySupport, "bounding box of nothing");
  const auto d = points.front()->cols();
  Vector lo = Vector::Constant(d, std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  for (const Matrix* m : points) {
    if (m->cols() != d) throw Error(ErrorKind::DimensionMismatch, "bounding box over mixed dimensions");
    if (m->rows() == 0) continue;
    lo = lo.cwiseMin(m->colwise().minCoeff().transpose());
    hi = hi.cwiseMax(m->colwise().maxCoeff().transpose());
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    double pad = pad_fraction * (hi[k] - lo[k]);
    if (pad <= 0.0) pad = 0.5;  // degenerate axis
    lo[k] -= pad;
    hi[k] += pad;
  }
  return Box{lo, hi};
}

double Box::radius() const { return 0.5 * (upper - lower).norm(); }

bool Box::contains(std::span<const double> x, double slack) const {
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] < lower[k] - slack || x[k] > upper[k] + slack) return false;
  }
  return true;
}

void Box::clamp_rows(Matrix& points) const {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) {
      points(i, k) = std::clamp(points(i, k), lower[k], upper[k]);
    }
  }
}

// ---------------------------------------------------------------------------
// DiscreteMeasure

DiscreteMeasure::DiscreteMeasure(Matrix points, std::optional<Vector> weights) {
  if (points.rows() == 0) throw Error(ErrorKind::EmptySupport, "measure needs at least one point");
  if (points.cols() == 0) throw Error(ErrorKind::InvalidArgument, "measure needs dimension >= 1");
  if (!points.allFinite()) throw Error(ErrorKind::NonFinite, "measure coordinates must be finite");

  Vector w;
  if (weights) {
    w = std::move(*weights);
    if (w.size() != points.rows()) {
      throw Error(ErrorKind::DimensionMismatch, "weights length " + std::to_string(w.size()) +
                                                    " does not match " + std::to_string(points.rows()) +
                                                    " points");
    }
    if (!w.allFinite()) throw Error(ErrorKind::NonFinite, "weights must be finite");
    if ((w.array() < 0.0).any()) throw Error(ErrorKind::NegativeWeight, "weights must be nonnegative");
    const double total = w.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::ZeroMass, "weights sum to zero");
    w /= total;
  } else {
    w = Vector::Constant(points.rows(), 1.0 / static_cast<double>(points.rows()));
  }
  points_ = std::move(points);
  weights_ = std::move(w);
}

DiscreteMeasure::DiscreteMeasure(Trusted, Matrix points, Vector weights)
    : points_(std::move(points)), weights_(std::move(weights)) {}

DiscreteMeasure DiscreteMeasure::with_points(Matrix points) const {
  if (points.rows() != points_.rows() || points.cols() != points_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "with_points must keep the support shape");
  }
  if (!points.allFinite()) throw Error(ErrorKind::NonFinite, "measure coordinates must be finite");
  return DiscreteMeasure(Trusted{}, std::move(points), weights_);
}

void DiscreteMeasure::require_inside(const Box& box, double slack) const {
  if (box.dim() != dim()) {
    throw Error(ErrorKind::DimensionMismatch, "measure dimension " + std::to_string(dim()) +
                                                  " does not match domain dimension " +
                                                  std::to_string(box.dim()));
  }
  for (int i = 0; i < size(); ++i) {
    if (!box.contains(point(i), slack)) {
      throw Error(ErrorKind::OutsideDomain, "support point " + std::to_string(i) + " lies outside the domain box");
    }
  }
}

bool DiscreteMeasure::operator==(const DiscreteMeasure& other) const {
  return points_.rows() == other.points_.rows() && points_.cols() == other.points_.cols() &&
         points_ == other.points_ && weights_ == other.weights_;
}

// ---------------------------------------------------------------------------
// GroundCost

GroundCost::GroundCost(CostKind kind, double domain_radius) : kind_(kind), radius_(domain_radius) {
  if (!(domain_radius > 0.0) || !std::isfinite(domain_radius)) {
    throw Error(ErrorKind::InvalidArgument, "domain radius must be positive and finite");
  }
}

double GroundCost::value(std::span<const double> x, std::span<const double> y) const {
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    sq += diff * diff;
  }
  return kind_ == CostKind::SquaredEuclideanHalf ? 0.5 * sq : std::sqrt(sq);
}

void GroundCost::gradient(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
  if (kind_ == CostKind::SquaredEuclideanHalf) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - y[k];
    return;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
  const double norm = std::sqrt(sq);
  // Subgradient 0 at the kink x == y.
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = norm > 0.0 ? (x[k] - y[k]) / norm : 0.0;
}

double GroundCost::bound() const {
  return kind_ == CostKind::SquaredEuclideanHalf ? 2.0 * radius_ * radius_ : 2.0 * radius_;
}

double GroundCost::lipschitz() const {
  return kind_ == CostKind::SquaredEuclideanHalf ? 2.0 * radius_ : 1.0;
}

double GroundCost::smoothness() const {
  return kind_ == CostKind::SquaredEuclideanHalf ? 1.0 : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// RbfKernel

RbfKernel::RbfKernel(double bandwidth) : bandwidth_(bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorKind::InvalidArgument, "kernel bandwidth must be positive and finite");
  }
}

double RbfKernel::value(std::span<const double> x, std::span<const double> y) const {
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
  return std::exp(-sq / (2.0 * bandwidth_ * bandwidth_));
}

Matrix RbfKernel::gram(const Matrix& a, const Matrix& b) const {
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "gram matrix over mixed dimensions");
  Matrix out(a.rows(), b.rows());
  const auto d = static_cast<std::size_t>(a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const std::span<const double> x(a.data() + i * a.cols(), d);
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = value(x, std::span<const double>(b.data() + j * b.cols(), d));
    }
  }
  return out;
}

double RbfKernel::lipschitz() const { return std::exp(-0.5) / bandwidth_; }

// ---------------------------------------------------------------------------
// Generators

namespace {

void require_count(int n, int minimum, const char* what) {
  if (n < minimum) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + " must be at least " + std::to_string(minimum));
  }
}

}  // namespace

EllipseParams ellipse_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> axis(0.3, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  EllipseParams p{};
  p.semi_axis_a = axis(rng);
  p.semi_axis_b = axis(rng);
  p.rotation = angle(rng);
  return p;
}

DiscreteMeasure generate_ellipse(std::uint64_t seed, int n_points, double jitter) {
  require_count(n_points, 3, "n_points");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) {
    throw Error(ErrorKind::InvalidArgument, "jitter must be nonnegative and finite");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> axis(0.3, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  const double a = axis(rng);
  const double b = axis(rng);
  const double theta = angle(rng);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);

  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix pts(n_points, 2);
  for (int i = 0; i < n_points; ++i) {
    const double t = phase(rng);
    const double u = a * std::cos(t);
    const double v = b * std::sin(t);
    pts(i, 0) = ct * u - st * v;
    pts(i, 1) = st * u + ct * v;
    if (jitter > 0.0) {
      pts(i, 0) += jitter * noise(rng);
      pts(i, 1) += jitter * noise(rng);
    }
  }
  return DiscreteMeasure(std::move(pts));
}

DiscreteMeasure generate_gaussian(std::uint64_t seed, int n_points, const Vector& mean, double stddev) {
  require_count(n_points, 1, "n_points");
  if (mean.size() < 1) throw Error(ErrorKind::InvalidArgument, "mean must have dimension >= 1");
  if (!(stddev > 0.0) || !std::isfinite(stddev)) {
    throw Error(ErrorKind::InvalidArgument, "stddev must be positive and finite");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix pts(n_points, mean.size());
  for (int i = 0; i < n_points; ++i) {
    for (Eigen::Index k = 0; k < mean.size(); ++k) pts(i, k) = mean[k] + stddev * noise(rng);
  }
  return DiscreteMeasure(std::move(pts));
}

DiscreteMeasure generate_uniform(std::uint64_t seed, int n_points, const Box& box) {
  require_count(n_points, 1, "n_points");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix pts(n_points, box.dim());
  for (int i = 0; i < n_points; ++i) {
    for (int k = 0; k < box.dim(); ++k) {
      pts(i, k) = box.lower[k] + (box.upper[k] - box.lower[k]) * unit(rng);
    }
  }
  return DiscreteMeasure(std::move(pts));
}

DiscreteMeasure measure_from_image(const GrayImage& image, double threshold) {
  if (image.height < 1 || image.width < 1) throw Error(ErrorKind::InvalidArgument, "image must be non-empty");
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * static_cast<std::size_t>(image.width)) {
    throw Error(ErrorKind::DimensionMismatch, "pixel count does not match image shape");
  }
  std::vector<double> xs, ys, ws;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const double v = image.pixels[static_cast<std::size_t>(r) * image.width + c];
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw Error(ErrorKind::InvalidArgument, "image intensities must lie in [0, 1]");
      }
      if (v > threshold) {
        xs.push_back((c + 0.5) / image.width);
        ys.push_back(1.0 - (r + 0.5) / image.height);
        ws.push_back(v);
      }
    }
  }
  if (ws.empty()) throw Error(ErrorKind::AllBelowThreshold, "no pixel exceeds the threshold");
  Matrix pts(static_cast<Eigen::Index>(ws.size()), 2);
  Vector w(static_cast<Eigen::Index>(ws.size()));
  for (std::size_t i = 0; i < ws.size(); ++i) {
    pts(i, 0) = xs[i];
    pts(i, 1) = ys[i];
    w[i] = ws[i];
  }
  return DiscreteMeasure(std::move(pts), std::move(w));
}

double median_heuristic_bandwidth(const DiscreteMeasure& measure) {
  constexpr int kMaxExact = 2000;
  constexpr std::uint64_t kSubsampleSeed = 0x5eed;
  const int n = measure.size();
  if (n < 2) throw Error(ErrorKind::SingleAtom, "median heuristic needs at least two points");

  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  if (n > kMaxExact) {
    std::mt19937_64 rng(kSubsampleSeed);
    // Partial Fisher-Yates: the first kMaxExact entries become the subsample.
    for (int i = 0; i < kMaxExact; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(kMaxExact);
  }

  std::vector<double> dist;
  dist.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      dist.push_back((measure.points().row(idx[a]) - measure.points().row(idx[b])).norm());
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median;
}

}  // namespace sinkdesc
