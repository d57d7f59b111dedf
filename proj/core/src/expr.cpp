#include "gpstab/expr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpstab/errors.hpp"

namespace gpstab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

SimplexBound scaled(const SimplexBound& b, double c) {
  SimplexBound out;
  out.vertex_values = c * b.vertex_values;
  if (c >= 0.0) {
    out.eps = {c * b.eps.lower, c * b.eps.upper};
  } else {
    out.eps = {-c * b.eps.upper, -c * b.eps.lower};
  }
  return out;
}

SimplexBound constant_bound(double c, Eigen::Index n_vertices) {
  return SimplexBound{Eigen::VectorXd::Constant(n_vertices, c), BoundPair{}};
}

SimplexBound product_of(const SimplexBound& a, const SimplexBound& b) {
  SimplexBound out;
  out.vertex_values = a.vertex_values.cwiseProduct(b.vertex_values);
  out.eps = sum_product_bounds(std::vector<SimplexBound>{a}, std::vector<SimplexBound>{b});
  return out;
}

}  // namespace

BoundExpr BoundExpr::constant(double value) { return BoundExpr(ConstantNode{value}); }

BoundExpr BoundExpr::linear(Eigen::VectorXd a, double b) {
  return BoundExpr(LinearNode{std::move(a), b});
}

BoundExpr BoundExpr::kernel(KernelSpec k) { return BoundExpr(KernelNode{std::move(k)}); }

BoundExpr BoundExpr::sum(std::vector<BoundExpr> children, std::vector<double> coefficients) {
  if (children.empty()) throw std::invalid_argument("sum node needs at least one child");
  if (children.size() != coefficients.size()) {
    throw std::invalid_argument("sum node: coefficient count differs from child count");
  }
  for (double c : coefficients) {
    if (!std::isfinite(c)) throw std::invalid_argument("sum node: non-finite coefficient");
  }
  return BoundExpr(SumNode{std::move(children), std::move(coefficients)});
}

BoundExpr BoundExpr::sum(std::vector<BoundExpr> children) {
  std::vector<double> ones(children.size(), 1.0);
  return sum(std::move(children), std::move(ones));
}

BoundExpr BoundExpr::product(std::vector<BoundExpr> children) {
  if (children.empty()) throw std::invalid_argument("product node needs at least one child");
  return BoundExpr(ProductNode{std::move(children)});
}

double expr_eval(const BoundExpr& e, const Point& x) {
  return std::visit(
      overloaded{
          [](const ConstantNode& c) { return c.value; },
          [&](const LinearNode& l) { return l.a.dot(x) + l.b; },
          [&](const KernelNode& k) { return kernel_eval(k.kernel, x); },
          [&](const SumNode& s) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s.children.size(); ++j) {
              acc += s.coefficients[j] * expr_eval(s.children[j], x);
            }
            return acc;
          },
          [&](const ProductNode& p) {
            double acc = expr_eval(p.children.front(), x);
            for (std::size_t j = 1; j < p.children.size(); ++j) acc *= expr_eval(p.children[j], x);
            return acc;
          },
      },
      e.node());
}

Eigen::VectorXd expr_grad(const BoundExpr& e, const Point& x) {
  return std::visit(
      overloaded{
          [&](const ConstantNode&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(x.size()); },
          [&](const LinearNode& l) -> Eigen::VectorXd { return l.a; },
          [&](const KernelNode& k) -> Eigen::VectorXd { return kernel_grad(k.kernel, x); },
          [&](const SumNode& s) -> Eigen::VectorXd {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
            for (std::size_t j = 0; j < s.children.size(); ++j) {
              g += s.coefficients[j] * expr_grad(s.children[j], x);
            }
            return g;
          },
          [&](const ProductNode& p) -> Eigen::VectorXd {
            const std::size_t m = p.children.size();
            std::vector<double> v(m);
            for (std::size_t j = 0; j < m; ++j) v[j] = expr_eval(p.children[j], x);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
            for (std::size_t j = 0; j < m; ++j) {
              double others = 1.0;
              for (std::size_t i = 0; i < m; ++i) {
                if (i != j) others *= v[i];
              }
              g += others * expr_grad(p.children[j], x);
            }
            return g;
          },
      },
      e.node());
}

BoundPair leaf_bounds(const BoundExpr& leaf, const Simplex& s) {
  if (leaf.as<ConstantNode>() || leaf.as<LinearNode>()) return BoundPair{};
  if (const auto* k = leaf.as<KernelNode>()) return kernel_simplex_bounds(k->kernel, s);
  throw std::invalid_argument("leaf_bounds: not a leaf");
}

BoundPair sum_product_bounds(const std::vector<SimplexBound>& phi,
                             const std::vector<SimplexBound>& psi) {
  if (phi.size() != psi.size()) {
    throw MismatchedFactorCount("sum_product_bounds: factor lists differ in length");
  }
  if (phi.empty()) return BoundPair{};
  const Eigen::Index nv = phi.front().vertex_values.size();
  const std::size_t m = phi.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (phi[j].vertex_values.size() != nv || psi[j].vertex_values.size() != nv) {
      throw std::invalid_argument("sum_product_bounds: vertex count mismatch");
    }
  }

  // S-terms: at each vertex, ε of one factor weighted by the positive and
  // negative parts of the other factor's value; each maximized over vertices.
  double max_phi_l = 0.0, max_phi_u = 0.0, max_psi_l = 0.0, max_psi_u = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    double phi_l = 0.0, phi_u = 0.0, psi_l = 0.0, psi_u = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double vpsi = psi[j].vertex_values[k];
      const double vphi = phi[j].vertex_values[k];
      phi_l += phi[j].eps.lower * std::max(0.0, vpsi) + phi[j].eps.upper * std::max(0.0, -vpsi);
      phi_u += phi[j].eps.upper * std::max(0.0, vpsi) + phi[j].eps.lower * std::max(0.0, -vpsi);
      psi_l += psi[j].eps.lower * std::max(0.0, vphi) + psi[j].eps.upper * std::max(0.0, -vphi);
      psi_u += psi[j].eps.upper * std::max(0.0, vphi) + psi[j].eps.lower * std::max(0.0, -vphi);
    }
    max_phi_l = std::max(max_phi_l, phi_l);
    max_phi_u = std::max(max_phi_u, phi_u);
    max_psi_l = std::max(max_psi_l, psi_l);
    max_psi_u = std::max(max_psi_u, psi_u);
  }

  double cross_lower = 0.0;
  double cross_upper = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    cross_lower += psi[j].eps.lower * phi[j].eps.upper + psi[j].eps.upper * phi[j].eps.lower;
    cross_upper += psi[j].eps.upper * phi[j].eps.upper + psi[j].eps.lower * phi[j].eps.lower;
  }

  // Difference-quotient term, written without dividing by τ:
  // 4τ² L(k,l) = Σ_j (φ_j(x_k) - φ_j(x_l)) (ψ_j(x_l) - ψ_j(x_k)).
  double pair_min = 0.0;
  double pair_max = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    for (Eigen::Index l = k + 1; l < nv; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += (phi[j].vertex_values[k] - phi[j].vertex_values[l]) *
               (psi[j].vertex_values[l] - psi[j].vertex_values[k]);
      }
      pair_min = std::min(pair_min, acc);
      pair_max = std::max(pair_max, acc);
    }
  }

  return BoundPair{max_phi_l + max_psi_l + cross_lower - pair_min,
                   max_phi_u + max_psi_u + cross_upper + pair_max};
}

BoundPair sum_product_bounds(const std::vector<std::pair<SimplexBound, SimplexBound>>& factors) {
  std::vector<SimplexBound> phi, psi;
  phi.reserve(factors.size());
  psi.reserve(factors.size());
  for (const auto& [a, b] : factors) {
    phi.push_back(a);
    psi.push_back(b);
  }
  return sum_product_bounds(phi, psi);
}

SimplexBound expr_bounds(const BoundExpr& e, const Simplex& s) {
  const Eigen::Index nv = s.vertex_count();
  return std::visit(
      overloaded{
          [&](const ConstantNode& c) { return constant_bound(c.value, nv); },
          [&](const LinearNode& l) {
            SimplexBound b;
            b.vertex_values.resize(nv);
            for (Eigen::Index k = 0; k < nv; ++k) b.vertex_values[k] = l.a.dot(s.vertex(k)) + l.b;
            return b;
          },
          [&](const KernelNode& k) {
            SimplexBound b;
            b.vertex_values.resize(nv);
            for (Eigen::Index i = 0; i < nv; ++i) b.vertex_values[i] = kernel_eval(k.kernel, s.vertex(i));
            b.eps = kernel_simplex_bounds(k.kernel, s);
            return b;
          },
          [&](const SumNode& sum) {
            std::vector<SimplexBound> phi, psi;
            SimplexBound out;
            out.vertex_values = Eigen::VectorXd::Zero(nv);
            for (std::size_t j = 0; j < sum.children.size(); ++j) {
              const double c = sum.coefficients[j];
              const BoundExpr& child = sum.children[j];
              const auto* prod = child.as<ProductNode>();
              if (prod && prod->children.size() == 2) {
                SimplexBound a = expr_bounds(prod->children[0], s);
                SimplexBound b = expr_bounds(prod->children[1], s);
                out.vertex_values += c * a.vertex_values.cwiseProduct(b.vertex_values);
                phi.push_back(scaled(a, c));
                psi.push_back(std::move(b));
              } else {
                SimplexBound b = expr_bounds(child, s);
                out.vertex_values += c * b.vertex_values;
                phi.push_back(constant_bound(c, nv));
                psi.push_back(std::move(b));
              }
            }
            out.eps = sum_product_bounds(phi, psi);
            return out;
          },
          [&](const ProductNode& p) {
            SimplexBound acc = expr_bounds(p.children.front(), s);
            for (std::size_t j = 1; j < p.children.size(); ++j) {
              acc = product_of(acc, expr_bounds(p.children[j], s));
            }
            return acc;
          },
      },
      e.node());
}

GlobalBounds global_bounds(const BoundExpr& e, const Triangulation& t) {
  GlobalBounds g{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (std::size_t id = 0; id < t.simplex_count(); ++id) {
    const SimplexBound b = expr_bounds(e, t.simplex(id));
    g.lower = std::min(g.lower, b.lower());
    g.upper = std::max(g.upper, b.upper());
  }
  return g;
}

}  // namespace gpstab
