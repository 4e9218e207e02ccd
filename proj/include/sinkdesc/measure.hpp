#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sinkdesc/error.hpp"

namespace sinkdesc {

/// Support points are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Axis-aligned box declaring the compact ground set.
struct Box {
  Vector lower;
  Vector upper;

  static Box cube(int dim, double half_width);
  /// Smallest box holding every point of `points`, grown by `pad_fraction` of its extent per axis.
  static Box bounding(const std::vector<const Matrix*>& points, double pad_fraction);

  int dim() const { return static_cast<int>(lower.size()); }
  /// Radius of the smallest ball containing the box (half the diagonal).
  double radius() const;
  bool contains(std::span<const double> x, double slack = 0.0) const;
  void clamp_rows(Matrix& points) const;
};

/// Weighted point cloud. Immutable after construction; weights sum to one.
class DiscreteMeasure {
 public:
  /// Validates and renormalizes. Weights default to uniform.
  explicit DiscreteMeasure(Matrix points, std::optional<Vector> weights = std::nullopt);

  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const Matrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  std::span<const double> point(int i) const {
    return {points_.data() + static_cast<std::ptrdiff_t>(i) * points_.cols(),
            static_cast<std::size_t>(points_.cols())};
  }

  /// Same weights (bit for bit), new support. Used by push-forward updates.
  DiscreteMeasure with_points(Matrix points) const;
  /// Throws OutsideDomain when a point falls outside `box` (beyond `slack`).
  void require_inside(const Box& box, double slack = 1e-12) const;

  bool operator==(const DiscreteMeasure& other) const;

 private:
  struct Trusted {};
  DiscreteMeasure(Trusted, Matrix points, Vector weights);

  Matrix points_;
  Vector weights_;
};

enum class CostKind { SquaredEuclideanHalf, Euclidean };

/// Ground cost c(x, y) on a ball of radius R, with the bounds M_c, G_c, L_c.
class GroundCost {
 public:
  GroundCost(CostKind kind, double domain_radius);
  static GroundCost for_box(CostKind kind, const Box& box) { return {kind, box.radius()}; }

  CostKind kind() const { return kind_; }
  double domain_radius() const { return radius_; }

  double value(std::span<const double> x, std::span<const double> y) const;
  /// Gradient in the first argument, written to `out`.
  void gradient(std::span<const double> x, std::span<const double> y, std::span<double> out) const;

  double bound() const;            // M_c
  double lipschitz() const;        // G_c
  double smoothness() const;       // L_c (infinite for Euclidean)

 private:
  CostKind kind_;
  double radius_;
};

/// Gaussian RBF kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
class RbfKernel {
 public:
  explicit RbfKernel(double bandwidth);

  double bandwidth() const { return bandwidth_; }
  double value(std::span<const double> x, std::span<const double> y) const;
  /// K(i, j) = k(a_i, b_j).
  Matrix gram(const Matrix& a, const Matrix& b) const;

  double bound() const { return 1.0; }  // D_k
  double lipschitz() const;             // G_k = exp(-1/2) / sigma

 private:
  double bandwidth_;
};

struct EllipseParams {
  double semi_axis_a;
  double semi_axis_b;
  double rotation;
};

/// Axes and rotation drawn by generate_ellipse for this seed.
EllipseParams ellipse_parameters(std::uint64_t seed);
DiscreteMeasure generate_ellipse(std::uint64_t seed, int n_points, double jitter);
DiscreteMeasure generate_gaussian(std::uint64_t seed, int n_points, const Vector& mean, double stddev);
/// Uniform samples in a box, uniform weights.
DiscreteMeasure generate_uniform(std::uint64_t seed, int n_points, const Box& box);

/// Row-major intensity grid in [0, 1], row 0 at the top.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;
};

/// Pixel centers mapped to [0,1]^2 (row 0 maps to the top, y near 1); weights follow intensity.
DiscreteMeasure measure_from_image(const GrayImage& image, double threshold = 0.05);

/// Median pairwise distance; a seeded subsample of 2000 points is used above that size.
double median_heuristic_bandwidth(const DiscreteMeasure& measure);

}  // namespace sinkdesc
