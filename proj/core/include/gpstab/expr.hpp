#pragma once

#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gpstab/geometry.hpp"
#include "gpstab/kernel.hpp"

namespace gpstab {

class BoundExpr;

struct ConstantNode {
  double value = 0.0;
};

// a^T x + b
struct LinearNode {
  Eigen::VectorXd a;
  double b = 0.0;
};

struct KernelNode {
  KernelSpec kernel;
};

// Σ_j coefficients[j] * children[j]
struct SumNode {
  std::vector<BoundExpr> children;
  std::vector<double> coefficients;
};

// Π_j children[j]
struct ProductNode {
  std::vector<BoundExpr> children;
};

/// Expression tree whose leaves are constants, affine functions, or Gaussian
/// kernels, combined by weighted sums and products. Immutable; copies share
/// the underlying node.
class BoundExpr {
 public:
  using Node = std::variant<ConstantNode, LinearNode, KernelNode, SumNode, ProductNode>;

  static BoundExpr constant(double value);
  static BoundExpr linear(Eigen::VectorXd a, double b);
  static BoundExpr kernel(KernelSpec k);
  // Throws std::invalid_argument if the sizes differ, the list is empty, or a
  // coefficient is not finite.
  static BoundExpr sum(std::vector<BoundExpr> children, std::vector<double> coefficients);
  static BoundExpr sum(std::vector<BoundExpr> children);  // unit coefficients
  static BoundExpr product(std::vector<BoundExpr> children);

  const Node& node() const { return *node_; }

  template <class T>
  const T* as() const {
    return std::get_if<T>(node_.get());
  }

 private:
  explicit BoundExpr(Node node) : node_(std::make_shared<const Node>(std::move(node))) {}
  std::shared_ptr<const Node> node_;
};

/// Vertex values of an expression on a simplex together with its deviation
/// bounds: min_k v_k - eps.lower <= f(x) <= max_k v_k + eps.upper on the simplex.
struct SimplexBound {
  Eigen::VectorXd vertex_values;
  BoundPair eps;

  double lower() const { return vertex_values.minCoeff() - eps.lower; }
  double upper() const { return vertex_values.maxCoeff() + eps.upper; }
};

double expr_eval(const BoundExpr& e, const Point& x);
Eigen::VectorXd expr_grad(const BoundExpr& e, const Point& x);

// Zero for constants and affine leaves, the closed-form kernel bound otherwise.
// Throws std::invalid_argument for a Sum or Product node.
BoundPair leaf_bounds(const BoundExpr& leaf, const Simplex& s);

// Bounds of χ = Σ_j φ_j ψ_j given per-factor vertex values and bounds.
// Throws MismatchedFactorCount if the lists differ in length.
BoundPair sum_product_bounds(const std::vector<SimplexBound>& phi,
                             const std::vector<SimplexBound>& psi);
BoundPair sum_product_bounds(const std::vector<std::pair<SimplexBound, SimplexBound>>& factors);

// Recursive bound assembly. Products fold left to right. A weighted sum is
// bounded as one sum of products: a two-factor product child [a, b] with
// weight c contributes the pair (c a, b); any other child contributes
// (c, child).
SimplexBound expr_bounds(const BoundExpr& e, const Simplex& s);

struct GlobalBounds {
  double lower = 0.0;
  double upper = 0.0;
};

GlobalBounds global_bounds(const BoundExpr& e, const Triangulation& t);

}  // namespace gpstab
