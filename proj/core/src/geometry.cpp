#include "gpstab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gpstab/errors.hpp"

namespace gpstab {

namespace {

constexpr double kDegeneracyTolerance = 1e-10;
constexpr double kMembershipSlack = 1e-9;

double factorial(Eigen::Index n) {
  double f = 1.0;
  for (Eigen::Index k = 2; k <= n; ++k) f *= static_cast<double>(k);
  return f;
}

long exact_cell_count(double length, double step) {
  const double ratio = length / step;
  const double nearest = std::round(ratio);
  if (nearest >= 1.0 && std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) {
    return static_cast<long>(nearest);
  }
  return static_cast<long>(std::ceil(ratio));
}

}  // namespace

double half_diameter(const Eigen::MatrixXd& vertices) {
  double max_dist = 0.0;
  for (Eigen::Index k = 0; k < vertices.cols(); ++k) {
    for (Eigen::Index l = k + 1; l < vertices.cols(); ++l) {
      max_dist = std::max(max_dist, (vertices.col(k) - vertices.col(l)).norm());
    }
  }
  return max_dist / 2.0;
}

double Simplex::volume() const {
  const Eigen::Index n = dimension();
  Eigen::MatrixXd edges(n, n);
  for (Eigen::Index k = 0; k < n; ++k) edges.col(k) = vertices_.col(k + 1) - vertices_.col(0);
  return std::abs(edges.determinant()) / factorial(n);
}

Simplex make_simplex(const Eigen::MatrixXd& vertices) {
  const Eigen::Index n = vertices.rows();
  if (n < 1 || vertices.cols() != n + 1) {
    throw std::invalid_argument("make_simplex: need n+1 points of dimension n, got " +
                                std::to_string(vertices.cols()) + " points of dimension " +
                                std::to_string(n));
  }
  Eigen::MatrixXd edges(n, n);
  for (Eigen::Index k = 0; k < n; ++k) edges.col(k) = vertices.col(k + 1) - vertices.col(0);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(edges).singularValues();
  if (!(sv(0) > 0.0) || sv(n - 1) < kDegeneracyTolerance * sv(0)) {
    throw DegenerateSimplex("vertices are not affinely independent");
  }
  return Simplex(vertices, half_diameter(vertices));
}

Simplex make_simplex(const std::vector<Point>& vertices) {
  if (vertices.empty()) throw std::invalid_argument("make_simplex: no vertices");
  Eigen::MatrixXd m(vertices.front().size(), static_cast<Eigen::Index>(vertices.size()));
  for (std::size_t k = 0; k < vertices.size(); ++k) {
    if (vertices[k].size() != m.rows()) {
      throw std::invalid_argument("make_simplex: inconsistent vertex dimensions");
    }
    m.col(static_cast<Eigen::Index>(k)) = vertices[k];
  }
  return make_simplex(m);
}

std::optional<BarycentricPoint> barycentric_of(const Simplex& simplex, const Point& x) {
  const Eigen::Index n = simplex.dimension();
  if (x.size() != n) throw std::invalid_argument("barycentric_of: dimension mismatch");
  Eigen::MatrixXd system(n + 1, n + 1);
  system.topRows(n) = simplex.vertices();
  system.row(n).setOnes();
  Eigen::VectorXd rhs(n + 1);
  rhs << x, 1.0;
  Eigen::VectorXd w = system.partialPivLu().solve(rhs);
  if (w.minCoeff() < -kMembershipSlack) return std::nullopt;
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return BarycentricPoint{std::move(w)};
}

double interpolate(const Simplex& simplex, const Eigen::VectorXd& vertex_values,
                   const BarycentricPoint& b) {
  if (vertex_values.size() != simplex.vertex_count() ||
      b.weights.size() != simplex.vertex_count()) {
    throw std::invalid_argument("interpolate: length mismatch");
  }
  return b.weights.dot(vertex_values);
}

bool Box::contains(const Point& x, double slack) const {
  for (Eigen::Index d = 0; d < dimension(); ++d) {
    if (x(d) < lower(d) - slack || x(d) > upper(d) + slack) return false;
  }
  return true;
}

Triangulation triangulate_box(const Box& box, const Eigen::VectorXd& grid_step) {
  const Eigen::Index n = box.dimension();
  if (n < 1 || box.upper.size() != n || grid_step.size() != n) {
    throw InvalidBox("box bounds and grid step must share a positive dimension");
  }
  Triangulation t;
  t.box_ = box;
  t.step_.resize(n);
  t.cells_.resize(static_cast<std::size_t>(n));
  t.cell_count_ = 1;
  for (Eigen::Index d = 0; d < n; ++d) {
    const double length = box.upper(d) - box.lower(d);
    if (!(length > 0.0)) {
      throw InvalidBox("lower bound must be below upper bound in dimension " + std::to_string(d));
    }
    if (!(grid_step(d) > 0.0)) throw InvalidBox("grid step must be positive");
    const long cells = exact_cell_count(length, grid_step(d));
    t.cells_[static_cast<std::size_t>(d)] = cells;
    t.step_(d) = length / static_cast<double>(cells);
    t.cell_count_ *= static_cast<std::size_t>(cells);
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    t.permutations_.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return t;
}

Triangulation triangulate_box(const Box& box, double grid_step) {
  return triangulate_box(box, Eigen::VectorXd::Constant(box.dimension(), grid_step));
}

std::vector<long> Triangulation::cell_multi_index(std::size_t cell) const {
  std::vector<long> idx(cells_.size());
  for (std::size_t d = cells_.size(); d-- > 0;) {
    const auto c = static_cast<std::size_t>(cells_[d]);
    idx[d] = static_cast<long>(cell % c);
    cell /= c;
  }
  return idx;
}

std::vector<std::vector<long>> Triangulation::vertex_nodes(std::size_t id) const {
  const std::size_t nperm = permutations_.size();
  const auto& perm = permutations_[id % nperm];
  std::vector<long> node = cell_multi_index(id / nperm);
  // Start at the cell corner that is upper along axis 0 and lower elsewhere.
  node[0] += 1;
  std::vector<std::vector<long>> nodes;
  nodes.reserve(perm.size() + 1);
  nodes.push_back(node);
  for (int axis : perm) {
    if (axis == 0) {
      node[0] -= 1;
    } else {
      node[static_cast<std::size_t>(axis)] += 1;
    }
    nodes.push_back(node);
  }
  return nodes;
}

Point Triangulation::node_point(const std::vector<long>& node) const {
  Point p(dimension());
  for (Eigen::Index d = 0; d < dimension(); ++d) {
    const auto i = static_cast<double>(node[static_cast<std::size_t>(d)]);
    const auto c = static_cast<double>(cells_[static_cast<std::size_t>(d)]);
    p(d) = box_.lower(d) + (box_.upper(d) - box_.lower(d)) * (i / c);
  }
  return p;
}

std::size_t Triangulation::node_count() const {
  std::size_t count = 1;
  for (long c : cells_) count *= static_cast<std::size_t>(c + 1);
  return count;
}

std::size_t Triangulation::node_linear_index(const std::vector<long>& node) const {
  std::size_t idx = 0;
  for (std::size_t d = 0; d < cells_.size(); ++d) {
    idx = idx * static_cast<std::size_t>(cells_[d] + 1) + static_cast<std::size_t>(node[d]);
  }
  return idx;
}

Simplex Triangulation::simplex(std::size_t id) const {
  if (id >= simplex_count()) throw std::out_of_range("Triangulation::simplex: bad id");
  const auto nodes = vertex_nodes(id);
  Eigen::MatrixXd v(dimension(), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    v.col(static_cast<Eigen::Index>(k)) = node_point(nodes[k]);
  }
  return make_simplex(v);
}

std::optional<std::size_t> Triangulation::locate(const Point& x) const {
  if (x.size() != dimension() || !box_.contains(x, kMembershipSlack)) return std::nullopt;
  std::size_t cell = 0;
  for (Eigen::Index d = 0; d < dimension(); ++d) {
    const long cells = cells_[static_cast<std::size_t>(d)];
    auto i = static_cast<long>(std::floor((x(d) - box_.lower(d)) / step_(d)));
    i = std::clamp(i, 0L, cells - 1);
    cell = cell * static_cast<std::size_t>(cells) + static_cast<std::size_t>(i);
  }
  const std::size_t nperm = permutations_.size();
  for (std::size_t p = 0; p < nperm; ++p) {
    const std::size_t id = cell * nperm + p;
    if (barycentric_of(simplex(id), x)) return id;
  }
  return std::nullopt;
}

std::vector<Simplex> Triangulation::simplices() const {
  std::vector<Simplex> out;
  out.reserve(simplex_count());
  for (std::size_t id = 0; id < simplex_count(); ++id) out.push_back(simplex(id));
  return out;
}

std::vector<Point> grid_points(const Box& box, const std::vector<long>& points_per_dim) {
  const Eigen::Index n = box.dimension();
  if (static_cast<Eigen::Index>(points_per_dim.size()) != n) {
    throw std::invalid_argument("grid_points: dimension mismatch");
  }
  std::size_t total = 1;
  for (long c : points_per_dim) {
    if (c < 1) throw std::invalid_argument("grid_points: need at least one point per axis");
    total *= static_cast<std::size_t>(c);
  }
  std::vector<Point> points;
  points.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Point p(n);
    std::size_t rest = flat;
    for (Eigen::Index d = n; d-- > 0;) {
      const auto c = static_cast<std::size_t>(points_per_dim[static_cast<std::size_t>(d)]);
      const auto i = static_cast<double>(rest % c);
      rest /= c;
      p(d) = c == 1 ? 0.5 * (box.lower(d) + box.upper(d))
                    : box.lower(d) + (box.upper(d) - box.lower(d)) * (i / static_cast<double>(c - 1));
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<long> grid_counts_for_step(const Box& box, double step) {
  if (!(step > 0.0)) throw InvalidBox("grid step must be positive");
  std::vector<long> counts(static_cast<std::size_t>(box.dimension()));
  for (Eigen::Index d = 0; d < box.dimension(); ++d) {
    const double length = box.upper(d) - box.lower(d);
    if (!(length > 0.0)) throw InvalidBox("lower bound must be below upper bound");
    counts[static_cast<std::size_t>(d)] = exact_cell_count(length, step) + 1;
  }
  return counts;
}

}  // namespace gpstab
