#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace gpstab {

using Point = Eigen::VectorXd;

/// An n-simplex given by n+1 affinely independent vertices (stored as columns).
///
/// `tau` is half of the largest pairwise vertex distance; every bound in this
/// library is expressed in terms of it.
class Simplex {
 public:
  const Eigen::MatrixXd& vertices() const { return vertices_; }
  Eigen::Index dimension() const { return vertices_.rows(); }
  Eigen::Index vertex_count() const { return vertices_.cols(); }
  Point vertex(Eigen::Index k) const { return vertices_.col(k); }
  double tau() const { return tau_; }

  Point centroid() const { return vertices_.rowwise().mean(); }
  double volume() const;

  // Point at barycentric weights (no validation).
  Point reconstruct(const Eigen::VectorXd& weights) const { return vertices_ * weights; }

 private:
  friend Simplex make_simplex(const Eigen::MatrixXd& vertices);
  Simplex(Eigen::MatrixXd vertices, double tau) : vertices_(std::move(vertices)), tau_(tau) {}

  Eigen::MatrixXd vertices_;
  double tau_ = 0.0;
};

/// Barycentric weights of a point in a simplex: nonnegative, summing to one.
struct BarycentricPoint {
  Eigen::VectorXd weights;
};

// Vertices are the columns of `vertices` (n rows, n+1 columns).
// Throws DegenerateSimplex when the edge matrix is rank deficient
// (smallest singular value < 1e-10 * largest) and std::invalid_argument on
// a shape mismatch.
Simplex make_simplex(const Eigen::MatrixXd& vertices);
Simplex make_simplex(const std::vector<Point>& vertices);

// Half the largest pairwise Euclidean distance between columns.
double half_diameter(const Eigen::MatrixXd& vertices);

// Weights reconstructing `x`, or nullopt when `x` lies outside the simplex.
// Points within 1e-9 (in barycentric slack) of a face count as inside; the
// returned weights are clamped to be nonnegative and renormalized.
std::optional<BarycentricPoint> barycentric_of(const Simplex& simplex, const Point& x);

// Linear interpolation of vertex values at barycentric weights.
double interpolate(const Simplex& simplex, const Eigen::VectorXd& vertex_values,
                   const BarycentricPoint& b);

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dimension() const { return lower.size(); }
  double volume() const { return (upper - lower).prod(); }
  bool contains(const Point& x, double slack = 0.0) const;
};

/// Kuhn (permutation) decomposition of a regular grid on an axis-aligned box.
///
/// Each grid cell splits into n! simplices. Axis 0 is reflected inside every
/// cell, so for n = 2 the two triangles of a cell share the anti-diagonal
/// edge and have legs of length `step` along the axes. Simplices are never
/// stored; they are regenerated from (cell index, permutation index).
class Triangulation {
 public:
  const Box& box() const { return box_; }
  const Eigen::VectorXd& grid_step() const { return step_; }
  const std::vector<long>& cells_per_dim() const { return cells_; }
  Eigen::Index dimension() const { return box_.dimension(); }

  std::size_t cell_count() const { return cell_count_; }
  std::size_t simplices_per_cell() const { return permutations_.size(); }
  std::size_t simplex_count() const { return cell_count_ * permutations_.size(); }

  Simplex simplex(std::size_t id) const;

  // Multi-index of every vertex of simplex `id` on the (cells+1)^n node grid.
  std::vector<std::vector<long>> vertex_nodes(std::size_t id) const;
  Point node_point(const std::vector<long>& node) const;
  std::size_t node_count() const;
  std::size_t node_linear_index(const std::vector<long>& node) const;

  // Id of a simplex containing `x` (membership slack 1e-9), if x is in the box.
  std::optional<std::size_t> locate(const Point& x) const;

  // Materializes every simplex; intended for small grids and tests.
  std::vector<Simplex> simplices() const;

 private:
  friend Triangulation triangulate_box(const Box& box, const Eigen::VectorXd& grid_step);
  Triangulation() = default;

  std::vector<long> cell_multi_index(std::size_t cell) const;

  Box box_;
  Eigen::VectorXd step_;
  std::vector<long> cells_;
  std::size_t cell_count_ = 0;
  std::vector<std::vector<int>> permutations_;
};

// Throws InvalidBox if lower >= upper in some dimension or a step is not
// positive. A step that does not divide its side (within 1e-9 relative) is
// shrunk to the nearest exact divisor.
Triangulation triangulate_box(const Box& box, const Eigen::VectorXd& grid_step);
Triangulation triangulate_box(const Box& box, double grid_step);

// Regular grid of points (inclusive of both ends) with the given per-axis
// point counts, row-major with the last axis varying fastest.
std::vector<Point> grid_points(const Box& box, const std::vector<long>& points_per_dim);

// Point count per axis for a step on the box, rounding to an exact divisor.
std::vector<long> grid_counts_for_step(const Box& box, double step);

}  // namespace gpstab
