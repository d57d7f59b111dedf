#include "gpstab/certifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <limits>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace gpstab {

namespace {

// Per-state quantities shared by every simplex touching that state, stored
// flat as [V̂, p(n), fcl(n), ΣP+(n), ΣP-(n), ΣA+(n), ΣA-(n)] where ΣP± are the
// sums over kernels of the positive and negative parts of P^(i).
class VertexEvaluator {
 public:
  explicit VertexEvaluator(const ClosedLoopModel& m)
      : n_(m.state_dim()),
        d_(m.value.kernels.size()),
        amplitude_(m.value.kernels.amplitude()),
        lambda_max_(m.value.kernels.lambda_max()),
        offset_(m.value.offset),
        alpha_(m.value.alpha),
        metric_(m.input_metric()),
        lambda_(m.value.kernels.inv_lengthscale()),
        centers_t_(m.value.kernels.centers().transpose()),
        weights_t_(m.fhat.weights().transpose()) {
    for (Eigen::Index i = 0; i < d_; ++i) {
      alpha_pos_ += std::max(0.0, alpha_[i]);
      alpha_neg_ += std::max(0.0, -alpha_[i]);
    }
  }

  Eigen::Index stride() const { return 1 + 6 * n_; }

  void eval(const Point& x, double* out) const {
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(2 * n_));
    double* pi = scratch.data();
    double* a = pi + n_;
    std::fill(out, out + stride(), 0.0);
    double* p = out + 1;
    double* f = p + n_;
    double* p_pos = f + n_;
    double* p_neg = p_pos + n_;
    double* a_pos = p_neg + n_;
    double* a_neg = a_pos + n_;
    double v = 0.0;
    for (Eigen::Index i = 0; i < d_; ++i) {
      const double* c = centers_t_.data() + i * n_;
      const double ai = alpha_[i];
      double quad = 0.0;
      for (Eigen::Index j = 0; j < n_; ++j) {
        const double dj = x[j] - c[j];
        quad += lambda_[j] * dj * dj;
        pi[j] = -ai * lambda_[j] * dj;
      }
      const double k = amplitude_ * std::exp(-0.5 * quad);
      v += ai * k;
      const double* w = weights_t_.data() + i * n_;
      for (Eigen::Index j = 0; j < n_; ++j) {
        double mp = 0.0;
        for (Eigen::Index l = 0; l < n_; ++l) mp += metric_(j, l) * pi[l];
        a[j] = w[j] - mp;
      }
      for (Eigen::Index j = 0; j < n_; ++j) {
        p[j] += pi[j] * k;
        f[j] += a[j] * k;
        p_pos[j] += std::max(0.0, pi[j]);
        p_neg[j] += std::max(0.0, -pi[j]);
        a_pos[j] += std::max(0.0, a[j]);
        a_neg[j] += std::max(0.0, -a[j]);
      }
    }
    out[0] = v - offset_;
  }

  struct Raw {
    double v_min = 0.0;
    double v_lower = 0.0;
    double h_max = 0.0;
    double h_upper = 0.0;
  };

  // vertices: n x N; data[k] points at the flat record of vertex k. When
  // `full` is given, vertex values and ε terms are written there as well.
  Raw assemble_raw(const Eigen::MatrixXd& vertices, const double* const* data, Eigen::Index nv,
                   SimplexBounds* full = nullptr) const {
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(6 * n_));
    double* ep_l = scratch.data();
    double* ep_u = ep_l + n_;
    double* ef_l = ep_u + n_;
    double* ef_u = ef_l + n_;
    double* scaled = ef_u + n_;
    double* tf = scaled + n_;

    const double tau = half_diameter(vertices);
    const BoundPair ek = kernel_bounds(amplitude_, lambda_max_, tau, nv);
    const BoundPair ev{ek.lower * alpha_pos_ + ek.upper * alpha_neg_, ek.upper * alpha_pos_ + ek.lower * alpha_neg_};

    auto p = [&](Eigen::Index k, Eigen::Index j) { return data[k][1 + j]; };
    auto f = [&](Eigen::Index k, Eigen::Index j) { return data[k][1 + n_ + j]; };
    auto field = [&](Eigen::Index k, int which, Eigen::Index j) { return data[k][1 + (2 + which) * n_ + j]; };

    // ε of each p_j and fcl_j: vertex-maximized S-terms first.
    for (Eigen::Index j = 0; j < n_; ++j) {
      double sp_l = 0.0, sp_u = 0.0, sf_l = 0.0, sf_u = 0.0;
      for (Eigen::Index k = 0; k < nv; ++k) {
        sp_l = std::max(sp_l, ek.lower * field(k, 0, j) + ek.upper * field(k, 1, j));
        sp_u = std::max(sp_u, ek.upper * field(k, 0, j) + ek.lower * field(k, 1, j));
        sf_l = std::max(sf_l, ek.lower * field(k, 2, j) + ek.upper * field(k, 3, j));
        sf_u = std::max(sf_u, ek.upper * field(k, 2, j) + ek.lower * field(k, 3, j));
      }
      ep_l[j] = sp_l;
      ep_u[j] = sp_u;
      ef_l[j] = sf_l;
      ef_u[j] = sf_u;
    }
    // Difference-quotient terms. P^(i)(x_k) - P^(i)(x_l) = -α_i Λ (x_k - x_l)
    // and A^(i)(x_k) - A^(i)(x_l) = α_i M Λ (x_k - x_l), so the sums over
    // kernels collapse onto differences of V̂.
    for (Eigen::Index j = 0; j < n_; ++j) {
      double pp_min = 0.0, pp_max = 0.0, pf_min = 0.0, pf_max = 0.0;
      for (Eigen::Index k = 0; k < nv; ++k) {
        for (Eigen::Index l = k + 1; l < nv; ++l) {
          const double dv = data[l][0] - data[k][0];
          double mf = 0.0;
          for (Eigen::Index c = 0; c < n_; ++c) {
            scaled[c] = lambda_[c] * (vertices(c, k) - vertices(c, l));
            mf += metric_(j, c) * scaled[c];
          }
          const double tp = -scaled[j] * dv;
          tf[j] = mf * dv;
          pp_min = std::min(pp_min, tp);
          pp_max = std::max(pp_max, tp);
          pf_min = std::min(pf_min, tf[j]);
          pf_max = std::max(pf_max, tf[j]);
        }
      }
      ep_l[j] -= pp_min;
      ep_u[j] += pp_max;
      ef_l[j] -= pf_min;
      ef_u[j] += pf_max;
    }

    // H_V̇ = Σ_j p_j fcl_j
    Raw raw;
    raw.v_min = std::numeric_limits<double>::infinity();
    raw.h_max = -std::numeric_limits<double>::infinity();
    double s1_l = 0.0, s1_u = 0.0, s2_l = 0.0, s2_u = 0.0;
    for (Eigen::Index k = 0; k < nv; ++k) {
      double a_l = 0.0, a_u = 0.0, b_l = 0.0, b_u = 0.0, h = 0.0;
      for (Eigen::Index j = 0; j < n_; ++j) {
        const double fk = f(k, j);
        const double pk = p(k, j);
        h += pk * fk;
        a_l += ep_l[j] * std::max(0.0, fk) + ep_u[j] * std::max(0.0, -fk);
        a_u += ep_u[j] * std::max(0.0, fk) + ep_l[j] * std::max(0.0, -fk);
        b_l += ef_l[j] * std::max(0.0, pk) + ef_u[j] * std::max(0.0, -pk);
        b_u += ef_u[j] * std::max(0.0, pk) + ef_l[j] * std::max(0.0, -pk);
      }
      raw.v_min = std::min(raw.v_min, data[k][0]);
      raw.h_max = std::max(raw.h_max, h);
      if (full) {
        full->value.vertex_values[k] = data[k][0];
        full->vdot.vertex_values[k] = h;
      }
      s1_l = std::max(s1_l, a_l);
      s1_u = std::max(s1_u, a_u);
      s2_l = std::max(s2_l, b_l);
      s2_u = std::max(s2_u, b_u);
    }
    double cross_l = 0.0, cross_u = 0.0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      cross_l += ef_l[j] * ep_u[j] + ef_u[j] * ep_l[j];
      cross_u += ef_u[j] * ep_u[j] + ef_l[j] * ep_l[j];
    }
    double pair_min = 0.0, pair_max = 0.0;
    for (Eigen::Index k = 0; k < nv; ++k) {
      for (Eigen::Index l = k + 1; l < nv; ++l) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n_; ++j) acc += (p(k, j) - p(l, j)) * (f(l, j) - f(k, j));
        pair_min = std::min(pair_min, acc);
        pair_max = std::max(pair_max, acc);
      }
    }
    const BoundPair eh{s1_l + s2_l + cross_l - pair_min, s1_u + s2_u + cross_u + pair_max};
    raw.v_lower = raw.v_min - ev.lower;
    raw.h_upper = raw.h_max + eh.upper;
    if (full) {
      full->value.eps = ev;
      full->vdot.eps = eh;
    }
    return raw;
  }

  SimplexBounds assemble(const Eigen::MatrixXd& vertices, const std::vector<const double*>& data) const {
    const auto nv = static_cast<Eigen::Index>(data.size());
    SimplexBounds out;
    out.value.vertex_values.resize(nv);
    out.vdot.vertex_values.resize(nv);
    assemble_raw(vertices, data.data(), nv, &out);
    return out;
  }

 private:
  Eigen::Index n_;
  Eigen::Index d_;
  double amplitude_;
  double lambda_max_;
  double offset_;
  double alpha_pos_ = 0.0;
  double alpha_neg_ = 0.0;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd metric_;
  Eigen::VectorXd lambda_;
  Eigen::MatrixXd centers_t_;  // n x D
  Eigen::MatrixXd weights_t_;  // n x D
};

// Longest edge (k, l), lowest indices on ties.
std::pair<Eigen::Index, Eigen::Index> longest_edge(const Eigen::MatrixXd& v) {
  std::pair<Eigen::Index, Eigen::Index> best{0, 1};
  double best_d = -1.0;
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    for (Eigen::Index l = k + 1; l < v.cols(); ++l) {
      const double d = (v.col(k) - v.col(l)).squaredNorm();
      if (d > best_d) {
        best_d = d;
        best = {k, l};
      }
    }
  }
  return best;
}

class Refiner {
 public:
  Refiner(const VertexEvaluator& ev, double margin) : ev_(ev), margin_(margin) {}

  RefinedBounds certify(const Eigen::MatrixXd& verts, const std::vector<const double*>& data, int depth) const {
    reserve(verts, data, depth);
    return certify_rec(verts, data, depth);
  }

  double value_lower(const Eigen::MatrixXd& verts, const std::vector<const double*>& data, int depth,
                     double target) const {
    reserve(verts, data, depth);
    return value_lower_rec(verts, data, depth, target);
  }

 private:
  struct Level {
    Eigen::MatrixXd child;
    Eigen::VectorXd mid_point;
    std::vector<double> mid;
    std::vector<const double*> data;
  };

  // One scratch level per remaining depth; the two children of a split run
  // one after the other, so they can share it.
  void reserve(const Eigen::MatrixXd& verts, const std::vector<const double*>& data, int depth) const {
    levels_.resize(static_cast<std::size_t>(std::max(depth, 0)) + 1);
    for (auto& lv : levels_) {
      lv.child.resize(verts.rows(), verts.cols());
      lv.mid_point.resize(verts.rows());
      lv.mid.resize(static_cast<std::size_t>(ev_.stride()));
      lv.data.resize(data.size());
    }
  }

  Level& split(const Eigen::MatrixXd& verts, int depth, Eigen::Index& k, Eigen::Index& l) const {
    Level& lv = levels_[static_cast<std::size_t>(depth)];
    std::tie(k, l) = longest_edge(verts);
    lv.mid_point = 0.5 * (verts.col(k) + verts.col(l));
    ev_.eval(lv.mid_point, lv.mid.data());
    return lv;
  }

  RefinedBounds certify_rec(const Eigen::MatrixXd& verts, const std::vector<const double*>& data,
                            int depth) const {
    const auto raw = ev_.assemble_raw(verts, data.data(), static_cast<Eigen::Index>(data.size()));
    RefinedBounds r{raw.v_lower, raw.h_upper, 1, false};
    r.certified = r.V_lower > margin_ && r.Hdot_upper < -margin_;
    if (r.certified || depth <= 0) return r;
    // Refinement cannot help once a vertex itself violates a condition.
    if (raw.v_min <= margin_ || raw.h_max >= -margin_) return r;

    Eigen::Index k = 0, l = 0;
    Level& lv = split(verts, depth, k, l);
    RefinedBounds agg{r.V_lower, r.Hdot_upper, 0, true};
    for (const Eigen::Index replaced : {l, k}) {
      lv.child = verts;
      lv.child.col(replaced) = lv.mid_point;
      lv.data = data;
      lv.data[static_cast<std::size_t>(replaced)] = lv.mid.data();
      const RefinedBounds c = certify_rec(lv.child, lv.data, depth - 1);
      if (!c.certified) return r;
      agg.V_lower = agg.pieces == 0 ? c.V_lower : std::min(agg.V_lower, c.V_lower);
      agg.Hdot_upper = agg.pieces == 0 ? c.Hdot_upper : std::max(agg.Hdot_upper, c.Hdot_upper);
      agg.pieces += c.pieces;
    }
    return agg;
  }

  double value_lower_rec(const Eigen::MatrixXd& verts, const std::vector<const double*>& data, int depth,
                         double target) const {
    const auto raw = ev_.assemble_raw(verts, data.data(), static_cast<Eigen::Index>(data.size()));
    const double lower = raw.v_lower;
    if (lower >= target || depth <= 0 || raw.v_min == lower) return lower;
    Eigen::Index k = 0, l = 0;
    Level& lv = split(verts, depth, k, l);
    double out = std::numeric_limits<double>::infinity();
    for (const Eigen::Index replaced : {l, k}) {
      lv.child = verts;
      lv.child.col(replaced) = lv.mid_point;
      lv.data = data;
      lv.data[static_cast<std::size_t>(replaced)] = lv.mid.data();
      out = std::min(out, value_lower_rec(lv.child, lv.data, depth - 1, target));
    }
    return std::max(out, lower);
  }

  const VertexEvaluator& ev_;
  double margin_;
  mutable std::vector<Level> levels_;
};

bool simplex_contains_origin(const Eigen::MatrixXd& vertices) {
  const Eigen::VectorXd lo = vertices.rowwise().minCoeff();
  const Eigen::VectorXd hi = vertices.rowwise().maxCoeff();
  if ((lo.array() > 1e-9).any() || (hi.array() < -1e-9).any()) return false;
  const Simplex s = make_simplex(vertices);
  return barycentric_of(s, Eigen::VectorXd::Zero(vertices.rows())).has_value();
}

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || count < 2 * threads) {
    fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

// Ids of the simplices sharing a facet with `id`.
std::vector<std::size_t> facet_neighbors(const Triangulation& t, std::size_t id) {
  const Simplex s = t.simplex(id);
  const Eigen::Index nv = s.vertex_count();
  const Eigen::VectorXd sum = s.vertices().rowwise().sum();
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < nv; ++k) {
    const Eigen::VectorXd facet_centroid = (sum - s.vertex(k)) / static_cast<double>(nv - 1);
    const Eigen::VectorXd probe = facet_centroid + 1e-4 * (facet_centroid - s.vertex(k));
    if (const auto nb = t.locate(probe); nb && *nb != id) out.push_back(*nb);
  }
  return out;
}

}  // namespace

ClosedLoopCoeffs closed_loop_coeffs(const ClosedLoopModel& m, const Point& x, Eigen::Index i) {
  const KernelSet& ks = m.value.kernels;
  if (i < 0 || i >= ks.size()) throw std::out_of_range("closed_loop_coeffs: kernel index");
  ClosedLoopCoeffs c;
  c.P = -m.value.alpha[i] * ks.inv_lengthscale().cwiseProduct(x - ks.centers().row(i).transpose());
  c.A = m.fhat.weights().row(i).transpose() - m.input_metric() * c.P;
  return c;
}

SimplexBounds simplex_bounds(const ClosedLoopModel& m, const Simplex& s) {
  const VertexEvaluator ev(m);
  std::vector<const double*> data;
  const auto nv = static_cast<std::size_t>(s.vertex_count());
  std::vector<double> buffer(nv * static_cast<std::size_t>(ev.stride()));
  data.resize(nv);
  for (std::size_t k = 0; k < nv; ++k) {
    ev.eval(s.vertex(static_cast<Eigen::Index>(k)), buffer.data() + k * static_cast<std::size_t>(ev.stride()));
    data[k] = buffer.data() + k * static_cast<std::size_t>(ev.stride());
  }
  return ev.assemble(s.vertices(), data);
}

namespace {

std::vector<double> vertex_records(const VertexEvaluator& ev, const Simplex& s, std::vector<const double*>& data) {
  const auto nv = static_cast<std::size_t>(s.vertex_count());
  const auto stride = static_cast<std::size_t>(ev.stride());
  std::vector<double> buffer(nv * stride);
  data.resize(nv);
  for (std::size_t k = 0; k < nv; ++k) {
    ev.eval(s.vertex(static_cast<Eigen::Index>(k)), buffer.data() + k * stride);
    data[k] = buffer.data() + k * stride;
  }
  return buffer;
}

}  // namespace

RefinedBounds refined_bounds(const ClosedLoopModel& m, const Simplex& s, int max_depth, double margin) {
  const VertexEvaluator ev(m);
  std::vector<const double*> data;
  const std::vector<double> buffer = vertex_records(ev, s, data);
  return Refiner(ev, margin).certify(s.vertices(), data, max_depth);
}

double refined_value_lower_bound(const ClosedLoopModel& m, const Simplex& s, int max_depth, double target) {
  const VertexEvaluator ev(m);
  std::vector<const double*> data;
  const std::vector<double> buffer = vertex_records(ev, s, data);
  return Refiner(ev, 0.0).value_lower(s.vertices(), data, max_depth, target);
}

double value_lower_bound(const ClosedLoopModel& m, const Simplex& s) {
  return simplex_bounds(m, s).value.lower();
}

double vdot_upper_bound(const ClosedLoopModel& m, const Simplex& s) {
  return simplex_bounds(m, s).vdot.upper();
}

std::vector<BoundExpr> value_gradient_exprs(const ClosedLoopModel& m) {
  const KernelSet& ks = m.value.kernels;
  const Eigen::Index n = m.state_dim();
  const Eigen::VectorXd lambda = ks.inv_lengthscale();
  std::vector<BoundExpr> out;
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<BoundExpr> terms;
    for (Eigen::Index i = 0; i < ks.size(); ++i) {
      const double ai = m.value.alpha[i];
      // P^(i)_j(x) = -α_i λ_j (x_j - c_ij)
      const BoundExpr lin = BoundExpr::linear(-ai * lambda[j] * Eigen::VectorXd::Unit(n, j),
                                              ai * lambda[j] * ks.centers()(i, j));
      terms.push_back(BoundExpr::product({lin, BoundExpr::kernel(ks.kernel(i))}));
    }
    out.push_back(BoundExpr::sum(std::move(terms)));
  }
  return out;
}

std::vector<BoundExpr> closed_loop_field_exprs(const ClosedLoopModel& m) {
  const KernelSet& ks = m.value.kernels;
  const Eigen::Index n = m.state_dim();
  const Eigen::VectorXd lambda = ks.inv_lengthscale();
  const Eigen::MatrixXd metric = m.input_metric();
  const Eigen::MatrixXd& w = m.fhat.weights();
  std::vector<BoundExpr> out;
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<BoundExpr> terms;
    for (Eigen::Index i = 0; i < ks.size(); ++i) {
      const double ai = m.value.alpha[i];
      // A^(i)_j(x) = W_ji + α_i Σ_l M_jl λ_l (x_l - c_il)
      const Eigen::VectorXd slope = ai * metric.row(j).transpose().cwiseProduct(lambda);
      const double intercept = w(i, j) - slope.dot(ks.centers().row(i).transpose());
      terms.push_back(BoundExpr::product({BoundExpr::linear(slope, intercept), BoundExpr::kernel(ks.kernel(i))}));
    }
    out.push_back(BoundExpr::sum(std::move(terms)));
  }
  return out;
}

BoundExpr lyapunov_derivative_expr(const ClosedLoopModel& m) {
  const std::vector<BoundExpr> p = value_gradient_exprs(m);
  const std::vector<BoundExpr> f = closed_loop_field_exprs(m);
  std::vector<BoundExpr> terms;
  for (std::size_t j = 0; j < p.size(); ++j) terms.push_back(BoundExpr::product({p[j], f[j]}));
  return BoundExpr::sum(std::move(terms));
}

std::string controller_hash(const ClosedLoopModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* data, Eigen::Index count) {
    for (Eigen::Index i = 0; i < count; ++i) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &data[i], sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  const KernelSet& ks = m.value.kernels;
  const double amp = ks.amplitude();
  mix(m.value.alpha.data(), m.value.alpha.size());
  mix(ks.centers().data(), ks.centers().size());
  mix(ks.inv_lengthscale().data(), ks.inv_lengthscale().size());
  mix(&amp, 1);
  mix(m.g.data(), m.g.size());
  mix(m.fhat.weights().data(), m.fhat.weights().size());
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

StabilityCertificate certify(const ClosedLoopModel& m, const Triangulation& t, const CertifyOptions& options) {
  if (t.dimension() != m.state_dim()) throw std::invalid_argument("certify: dimension mismatch");
  const VertexEvaluator ev(m);
  const auto stride = static_cast<std::size_t>(ev.stride());
  const std::size_t node_count = t.node_count();
  const auto& cells = t.cells_per_dim();
  const std::size_t dims = cells.size();

  std::vector<double> nodes(node_count * stride);
  parallel_for(node_count, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<long> idx(dims);
    for (std::size_t lin = begin; lin < end; ++lin) {
      std::size_t rest = lin;
      for (std::size_t d = dims; d-- > 0;) {
        const auto c = static_cast<std::size_t>(cells[d] + 1);
        idx[d] = static_cast<long>(rest % c);
        rest /= c;
      }
      ev.eval(t.node_point(idx), nodes.data() + lin * stride);
    }
  });

  StabilityCertificate cert;
  cert.box = t.box();
  cert.grid_step = t.grid_step();
  cert.controller_hash = controller_hash(m);
  const std::size_t count = t.simplex_count();
  cert.verdicts.resize(count);
  std::vector<std::uint8_t> on_boundary(count, 0);

  parallel_for(count, options.threads, [&](std::size_t begin, std::size_t end) {
    const Refiner refiner(ev, options.margin);
    std::vector<const double*> data;
    for (std::size_t id = begin; id < end; ++id) {
      const auto vn = t.vertex_nodes(id);
      Eigen::MatrixXd verts(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(vn.size()));
      data.assign(vn.size(), nullptr);
      bool boundary = false;
      for (std::size_t k = 0; k < vn.size(); ++k) {
        verts.col(static_cast<Eigen::Index>(k)) = t.node_point(vn[k]);
        data[k] = nodes.data() + t.node_linear_index(vn[k]) * stride;
        for (std::size_t d = 0; d < dims; ++d) {
          if (vn[k][d] == 0 || vn[k][d] == cells[d]) boundary = true;
        }
      }
      SimplexVerdict& v = cert.verdicts[id];
      v.contains_origin = simplex_contains_origin(verts);
      const RefinedBounds r = refiner.certify(verts, data, v.contains_origin ? 0 : options.max_refinement_depth);
      v.V_lower = r.V_lower;
      v.Hdot_upper = r.Hdot_upper;
      v.pieces = r.pieces;
      v.certified = !v.contains_origin && r.certified;
      on_boundary[id] = boundary ? 1 : 0;
    }
  });

  for (std::size_t id = 0; id < count; ++id) {
    const SimplexVerdict& v = cert.verdicts[id];
    cert.certified_count += v.certified ? 1 : 0;
    cert.origin_count += v.contains_origin ? 1 : 0;
    cert.max_abs_hdot_upper = std::max(cert.max_abs_hdot_upper, std::abs(v.Hdot_upper));
  }
  cert.certified_fraction = count == 0 ? 0.0 : static_cast<double>(cert.certified_count) / static_cast<double>(count);
  if (count > 0) cert.eps_value_lower = simplex_bounds(m, t.simplex(0)).value.eps.lower;

  // Origin bucket: uncertified simplices connected to those containing the origin.
  cert.origin_bucket.assign(count, 0);
  std::deque<std::size_t> queue;
  for (std::size_t id = 0; id < count; ++id) {
    if (cert.verdicts[id].contains_origin) {
      cert.origin_bucket[id] = 1;
      queue.push_back(id);
    }
  }
  while (!queue.empty()) {
    const std::size_t id = queue.front();
    queue.pop_front();
    if (on_boundary[id]) cert.bucket_reaches_boundary = true;
    for (std::size_t nb : facet_neighbors(t, id)) {
      if (!cert.origin_bucket[nb] && !cert.verdicts[nb].certified) {
        cert.origin_bucket[nb] = 1;
        queue.push_back(nb);
      }
    }
  }

  // Certified region reachable from the bucket.
  cert.in_region.assign(count, 0);
  if (!cert.bucket_reaches_boundary) {
    for (std::size_t id = 0; id < count; ++id) {
      if (!cert.origin_bucket[id]) continue;
      ++cert.bucket_count;
      for (std::size_t nb : facet_neighbors(t, id)) {
        if (cert.verdicts[nb].certified && !cert.in_region[nb]) {
          cert.in_region[nb] = 1;
          queue.push_back(nb);
        }
      }
    }
    while (!queue.empty()) {
      const std::size_t id = queue.front();
      queue.pop_front();
      for (std::size_t nb : facet_neighbors(t, id)) {
        if (cert.verdicts[nb].certified && !cert.in_region[nb]) {
          cert.in_region[nb] = 1;
          queue.push_back(nb);
        }
      }
    }
  } else {
    for (std::size_t id = 0; id < count; ++id) cert.bucket_count += cert.origin_bucket[id];
  }
  for (std::size_t id = 0; id < count; ++id) cert.region_count += cert.in_region[id];

  // Sublevel threshold. Vertex values of the candidates bound the true
  // minimum from above, so lower bounds are refined only until they reach it.
  std::vector<std::size_t> candidates;
  double target = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < count; ++id) {
    if (cert.origin_bucket[id] || (cert.verdicts[id].certified && !on_boundary[id])) continue;
    candidates.push_back(id);
    for (const auto& node : t.vertex_nodes(id)) {
      target = std::min(target, nodes[t.node_linear_index(node) * stride]);
    }
  }
  cert.level = std::numeric_limits<double>::infinity();
  const Refiner refiner(ev, options.margin);
  for (std::size_t id : candidates) {
    double lower = cert.verdicts[id].V_lower;
    if (lower < target && options.max_refinement_depth > 0) {
      const auto vn = t.vertex_nodes(id);
      Eigen::MatrixXd verts(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(vn.size()));
      std::vector<const double*> data(vn.size());
      for (std::size_t k = 0; k < vn.size(); ++k) {
        verts.col(static_cast<Eigen::Index>(k)) = t.node_point(vn[k]);
        data[k] = nodes.data() + t.node_linear_index(vn[k]) * stride;
      }
      lower = std::max(lower, refiner.value_lower(verts, data, options.max_refinement_depth, target));
    }
    cert.level = std::min(cert.level, lower);
  }
  if (cert.bucket_reaches_boundary) cert.level = 0.0;
  return cert;
}

}  // namespace gpstab
