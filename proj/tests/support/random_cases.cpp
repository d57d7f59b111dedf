#include "random_cases.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "gpstab/gp_model.hpp"

namespace gpstab::testing {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::VectorXd uniform_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

Simplex random_simplex(Rng& rng, const Point& center, double scale) {
  const Eigen::Index n = center.size();
  for (;;) {
    Eigen::MatrixXd v(n, n + 1);
    for (Eigen::Index k = 0; k <= n; ++k) v.col(k) = center + scale * uniform_vector(rng, n, -1.0, 1.0);
    Eigen::MatrixXd edges(n, n);
    for (Eigen::Index k = 0; k < n; ++k) edges.col(k) = v.col(k + 1) - v.col(0);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(edges).singularValues();
    if (sv[n - 1] > 0.05 * sv[0]) return make_simplex(v);
  }
}

Simplex dilate(const Simplex& s, double factor) {
  const Point c = s.centroid();
  Eigen::MatrixXd v = s.vertices();
  for (Eigen::Index k = 0; k < v.cols(); ++k) v.col(k) = c + factor * (v.col(k) - c);
  return make_simplex(v);
}

Eigen::VectorXd random_weights(Rng& rng, Eigen::Index count) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(count);
  const auto pick = [&] { return std::uniform_int_distribution<Eigen::Index>(0, count - 1)(rng); };
  switch (std::uniform_int_distribution<int>(0, 31)(rng)) {
    case 0:
      w[pick()] = 1.0;
      return w;
    case 1: {
      const Eigen::Index a = pick();
      const Eigen::Index b = pick();
      w[a] += 0.5;
      w[b] += 0.5;
      return w;
    }
    default:
      break;
  }
  std::exponential_distribution<double> e(1.0);
  for (Eigen::Index k = 0; k < count; ++k) w[k] = e(rng);
  return w / w.sum();
}

KernelSpec random_kernel(Rng& rng, const Point& near, double spread) {
  const Eigen::Index n = near.size();
  const Point c = near + spread * uniform_vector(rng, n, -1.0, 1.0);
  return make_kernel(c, uniform(rng, 0.3, 3.0), uniform_vector(rng, n, 0.2, 4.0));
}

BoundExpr random_expr(Rng& rng, const Point& near, double spread, int depth) {
  const Eigen::Index n = near.size();
  const int kind = depth <= 0 ? std::uniform_int_distribution<int>(0, 2)(rng)
                              : std::uniform_int_distribution<int>(0, 5)(rng);
  switch (kind) {
    case 0:
      return BoundExpr::constant(uniform(rng, -2.0, 2.0));
    case 1:
      return BoundExpr::linear(uniform_vector(rng, n, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    case 2:
      return BoundExpr::kernel(random_kernel(rng, near, spread));
    default:
      break;
  }
  const int count = std::uniform_int_distribution<int>(2, 3)(rng);
  std::vector<BoundExpr> children;
  for (int i = 0; i < count; ++i) children.push_back(random_expr(rng, near, spread, depth - 1));
  if (kind == 5) return BoundExpr::product(std::move(children));
  std::vector<double> coeffs;
  for (int i = 0; i < count; ++i) coeffs.push_back(uniform(rng, -2.0, 2.0));
  return BoundExpr::sum(std::move(children), std::move(coeffs));
}

ClosedLoopModel random_model(Rng& rng, Eigen::Index n, Eigen::Index m, Eigen::Index D) {
  Eigen::MatrixXd centers(D, n);
  for (Eigen::Index i = 0; i < D; ++i) centers.row(i) = uniform_vector(rng, n, -1.0, 1.0).transpose();
  KernelSet ks(centers, uniform(rng, 0.5, 2.0), uniform_vector(rng, n, 0.5, 3.0));
  Eigen::MatrixXd weights(D, n);
  for (Eigen::Index i = 0; i < D; ++i) weights.row(i) = uniform_vector(rng, n, -1.0, 1.0).transpose();
  Eigen::MatrixXd gram = ks.self_gram();
  gram.diagonal().array() += 0.01;
  GpMean fhat(ks, weights, gram);

  Eigen::MatrixXd g(n, m);
  for (Eigen::Index j = 0; j < m; ++j) g.col(j) = uniform_vector(rng, n, -1.0, 1.0);
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) L(i, j) = uniform(rng, -0.5, 0.5);
  }
  const Eigen::MatrixXd R = L * L.transpose();
  const Eigen::VectorXd alpha = uniform_vector(rng, D, -1.0, 1.0);
  return ClosedLoopModel{fhat, g, ValueFunctionParams::make(ks, alpha), CostSpec::squared_norm(n, R)};
}

namespace {

double scalar_kernel(const KernelSpec& k, const Point& x) {
  double quad = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double d = x[j] - k.center[j];
    quad += k.inv_lengthscale[j] * d * d;
  }
  return k.amplitude * std::exp(-0.5 * quad);
}

}  // namespace

double reference_eval(const BoundExpr& root, const Point& x) {
  struct Frame {
    const BoundExpr* e;
    std::size_t next = 0;
    double acc = 0.0;
  };
  std::vector<Frame> stack{{&root}};
  double result = 0.0;
  while (!stack.empty()) {
    Frame& f = stack.back();
    const BoundExpr& e = *f.e;
    double leaf = 0.0;
    bool done = true;
    if (const auto* c = e.as<ConstantNode>()) {
      leaf = c->value;
    } else if (const auto* l = e.as<LinearNode>()) {
      leaf = l->b;
      for (Eigen::Index j = 0; j < x.size(); ++j) leaf += l->a[j] * x[j];
    } else if (const auto* k = e.as<KernelNode>()) {
      leaf = scalar_kernel(k->kernel, x);
    } else {
      const auto* s = e.as<SumNode>();
      const auto* p = e.as<ProductNode>();
      const auto& kids = s ? s->children : p->children;
      if (f.next == 0) f.acc = s ? 0.0 : 1.0;
      if (f.next < kids.size()) {
        done = false;
        stack.push_back(Frame{&kids[f.next]});
      } else {
        leaf = f.acc;
      }
    }
    if (!done) continue;
    stack.pop_back();
    if (stack.empty()) {
      result = leaf;
      break;
    }
    Frame& parent = stack.back();
    if (const auto* s = parent.e->as<SumNode>()) {
      parent.acc += s->coefficients[parent.next] * leaf;
    } else {
      parent.acc *= leaf;
    }
    ++parent.next;
  }
  return result;
}

void check_sandwich(const std::function<double(const Point&)>& f, const SimplexBound& bound,
                    const Simplex& s, Rng& rng, long samples, SandwichStats& stats) {
  const double lo = bound.lower();
  const double hi = bound.upper();
  const double scale = bound.vertex_values.cwiseAbs().maxCoeff() + bound.eps.lower + bound.eps.upper;
  for (long i = 0; i < samples; ++i) {
    const Point x = s.reconstruct(random_weights(rng, s.vertex_count()));
    const double v = f(x);
    const double slack = 1e-10 * (1.0 + scale + std::abs(v));
    const double excess = std::max(lo - v, v - hi);
    stats.worst_excess = std::max(stats.worst_excess, excess / (1.0 + scale + std::abs(v)));
    if (!std::isfinite(v) || excess > slack) ++stats.violations;
    ++stats.samples;
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace gpstab::testing
