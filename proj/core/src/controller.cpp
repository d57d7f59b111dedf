#include "gpstab/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gpstab/errors.hpp"

namespace gpstab {

namespace {

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& R) {
  if (R.rows() != R.cols() || R.rows() == 0) throw std::invalid_argument("R must be square");
  if (!R.isApprox(R.transpose(), 1e-12)) throw NotPositiveDefinite("R must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("R must be positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(R.rows(), R.cols()));
}

}  // namespace

CostSpec CostSpec::squared_norm(Eigen::Index n, const Eigen::MatrixXd& R) {
  CostSpec c;
  std::vector<BoundExpr> terms;
  for (Eigen::Index d = 0; d < n; ++d) {
    const BoundExpr xd = BoundExpr::linear(Eigen::VectorXd::Unit(n, d), 0.0);
    terms.push_back(BoundExpr::product({xd, xd}));
  }
  c.q = BoundExpr::sum(std::move(terms));
  c.R = R;
  c.R_inv = checked_inverse(R);
  c.quadratic_part = Eigen::MatrixXd::Identity(n, n);
  return c;
}

CostSpec CostSpec::custom(BoundExpr q, Eigen::Index n, const Eigen::MatrixXd& R) {
  CostSpec c;
  c.q = std::move(q);
  c.R = R;
  c.R_inv = checked_inverse(R);
  constexpr double h = 1e-4;
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd ei = h * Eigen::VectorXd::Unit(n, i);
      const Eigen::VectorXd ej = h * Eigen::VectorXd::Unit(n, j);
      hess(i, j) = (expr_eval(c.q, ei + ej) - expr_eval(c.q, ei - ej) - expr_eval(c.q, ej - ei) +
                    expr_eval(c.q, -ei - ej)) /
                   (4.0 * h * h);
    }
  }
  c.quadratic_part = 0.25 * (hess + hess.transpose());
  return c;
}

ValueFunctionParams ValueFunctionParams::make(KernelSet kernels, Eigen::VectorXd alpha) {
  if (alpha.size() != kernels.size()) throw std::invalid_argument("alpha size differs from kernel count");
  ValueFunctionParams vp;
  vp.offset = alpha.dot(kernels.values(Eigen::VectorXd::Zero(kernels.dimension())));
  vp.kernels = std::move(kernels);
  vp.alpha = std::move(alpha);
  return vp;
}

BoundExpr ValueFunctionParams::as_expr() const {
  std::vector<BoundExpr> children;
  std::vector<double> coeffs;
  for (Eigen::Index i = 0; i < kernels.size(); ++i) {
    children.push_back(BoundExpr::kernel(kernels.kernel(i)));
    coeffs.push_back(alpha[i]);
  }
  children.push_back(BoundExpr::constant(-offset));
  coeffs.push_back(1.0);
  return BoundExpr::sum(std::move(children), std::move(coeffs));
}

double value(const ValueFunctionParams& vp, const Point& x) {
  return vp.alpha.dot(vp.kernels.values(x)) - vp.offset;
}

Eigen::VectorXd value_grad(const ValueFunctionParams& vp, const Point& x) {
  return vp.kernels.gradients(x) * vp.alpha;
}

ClosedLoopModel ClosedLoopModel::with_alpha(const Eigen::VectorXd& alpha) const {
  ClosedLoopModel out = *this;
  out.value = ValueFunctionParams::make(value.kernels, alpha);
  return out;
}

Eigen::VectorXd optimal_input(const ClosedLoopModel& m, const Point& x) {
  return -m.cost.R_inv * (m.g.transpose() * value_grad(m.value, x));
}

double hjb_residual(const ClosedLoopModel& m, const Point& x) {
  const Eigen::VectorXd p = value_grad(m.value, x);
  const Eigen::VectorXd gtp = m.g.transpose() * p;
  return p.dot(m.fhat.eval(x)) - 0.5 * gtp.dot(m.cost.R_inv * gtp) + expr_eval(m.cost.q, x);
}

double lyapunov_derivative(const ClosedLoopModel& m, const Point& x) {
  const Eigen::VectorXd p = value_grad(m.value, x);
  const Eigen::VectorXd gtp = m.g.transpose() * p;
  return p.dot(m.fhat.eval(x)) - gtp.dot(m.cost.R_inv * gtp);
}

LqrInit init_lqr(const GpMean& fhat, const Eigen::MatrixXd& g, const CostSpec& cost,
                 const std::vector<Point>& check_states, double kappa_alpha) {
  const Eigen::Index n = g.rows();
  if (check_states.empty()) throw std::invalid_argument("init_lqr: no check states");
  if (!(kappa_alpha > 0.0)) throw std::invalid_argument("init_lqr: kappa_alpha must be positive");

  LqrInit out;
  out.A = fhat.jacobian(Eigen::VectorXd::Zero(n));
  const CareSolution care = solve_care(out.A, g, cost.quadratic_part, 0.5 * cost.R);
  out.P = care.P;
  out.care_residual = care.residual;
  out.closed_loop = out.A - g * (cost.R_inv * g.transpose() * (2.0 * out.P));

  const KernelSet& ks = fhat.kernels();
  const Eigen::Index d = ks.size();
  const auto rows = static_cast<Eigen::Index>(check_states.size());
  const Eigen::VectorXd k0 = ks.values(Eigen::VectorXd::Zero(n));

  // Row k of Φ is φ(x_k)^T = (K_XX^{-1} (k(x_k) - k(0)))^T.
  Eigen::MatrixXd centered(d, rows);
  Eigen::VectorXd v(rows);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const Point& x = check_states[static_cast<std::size_t>(k)];
    centered.col(k) = ks.values(x) - k0;
    v[k] = x.dot(out.P * x);
  }
  const Eigen::MatrixXd phi = fhat.gram_llt().solve(centered).transpose();

  Eigen::MatrixXd normal = phi.transpose() * phi;
  normal.diagonal().array() += kappa_alpha;
  const Eigen::VectorXd rhs = phi.transpose() * v;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  Eigen::VectorXd acute = ldlt.solve(rhs);
  // One step of iterative refinement.
  acute += ldlt.solve(rhs - normal * acute);
  out.normal_residual = (normal * acute - rhs).norm();

  Eigen::VectorXd alpha = fhat.gram_llt().solve(acute);
  out.value = ValueFunctionParams::make(ks, std::move(alpha));
  return out;
}

SynthesisObjective::SynthesisObjective(const ClosedLoopModel& m, const std::vector<Point>& check_states,
                                       const SynthesisOptions& options)
    : metric_(m.input_metric()), kappa_(options.kappa), llt_(m.fhat.gram_llt()) {
  states_.reserve(check_states.size());
  for (const Point& x : check_states) {
    State s;
    s.grads = m.value.kernels.gradients(x);
    s.f = m.fhat.eval(x);
    s.q = expr_eval(m.cost.q, x);
    s.eta = options.eta(x);
    s.in_penalty = !(options.skip_origin_in_penalty && x.norm() <= 1e-12);
    states_.push_back(std::move(s));
  }
}

ObjectiveTerms SynthesisObjective::eval(const Eigen::VectorXd& alpha) const {
  ObjectiveTerms t;
  double worst = 0.0;
  for (std::size_t k = 0; k < states_.size(); ++k) {
    const State& s = states_[k];
    const Eigen::VectorXd p = s.grads * alpha;
    const Eigen::VectorXd mp = metric_ * p;
    const double pf = p.dot(s.f);
    const double pmp = p.dot(mp);
    const double h = pf - 0.5 * pmp + s.q;
    t.hjb += h * h;
    if (s.in_penalty) {
      const double viol = std::max(0.0, pf - pmp + s.eta);
      if (viol > worst) {
        worst = viol;
        t.worst_state = static_cast<int>(k);
      }
    }
  }
  t.lyapunov = kappa_ * worst * worst;
  t.objective = t.hjb + t.lyapunov;
  return t;
}

ObjectiveTerms SynthesisObjective::eval(const Eigen::VectorXd& alpha, Eigen::VectorXd& grad) const {
  ObjectiveTerms t;
  double worst = 0.0;
  grad = Eigen::VectorXd::Zero(alpha.size());
  Eigen::VectorXd worst_dir;
  for (std::size_t k = 0; k < states_.size(); ++k) {
    const State& s = states_[k];
    const Eigen::VectorXd p = s.grads * alpha;
    const Eigen::VectorXd mp = metric_ * p;
    const double pf = p.dot(s.f);
    const double pmp = p.dot(mp);
    const double h = pf - 0.5 * pmp + s.q;
    t.hjb += h * h;
    grad.noalias() += (2.0 * h) * (s.grads.transpose() * (s.f - mp));
    if (s.in_penalty) {
      const double viol = std::max(0.0, pf - pmp + s.eta);
      if (viol > worst) {
        worst = viol;
        t.worst_state = static_cast<int>(k);
        worst_dir = s.f - 2.0 * mp;
      }
    }
  }
  t.lyapunov = kappa_ * worst * worst;
  t.objective = t.hjb + t.lyapunov;
  if (t.worst_state >= 0) {
    const State& s = states_[static_cast<std::size_t>(t.worst_state)];
    grad.noalias() += (2.0 * kappa_ * worst) * (s.grads.transpose() * worst_dir);
  }
  return t;
}

ObjectiveTerms SynthesisObjective::eval_acute(const Eigen::VectorXd& alpha_acute,
                                              Eigen::VectorXd& grad_acute) const {
  const Eigen::VectorXd alpha = llt_.solve(alpha_acute);
  Eigen::VectorXd grad_alpha;
  const ObjectiveTerms t = eval(alpha, grad_alpha);
  grad_acute = llt_.solve(grad_alpha);
  return t;
}

SynthesisResult synthesize(const ClosedLoopModel& m, const std::vector<Point>& check_states,
                           const SynthesisOptions& options) {
  if (options.iterations < 0) throw std::invalid_argument("synthesize: negative iteration count");
  const SynthesisObjective objective(m, check_states, options);
  const Eigen::LLT<Eigen::MatrixXd>& llt = objective.gram_llt();

  Eigen::VectorXd acute = m.fhat.gram() * m.value.alpha;
  Eigen::VectorXd best_acute = acute;
  Eigen::VectorXd grad;

  SynthesisResult result;
  result.trace.reserve(static_cast<std::size_t>(options.iterations) + 1);
  for (int it = 0; it <= options.iterations; ++it) {
    const ObjectiveTerms t = objective.eval_acute(acute, grad);
    result.trace.push_back({it, t});
    if (it == 0) {
      result.initial_objective = result.best_objective = t.objective;
    } else if (t.objective < result.best_objective) {
      result.best_objective = t.objective;
      result.best_iteration = it;
      best_acute = acute;
    }
    if (it == options.iterations || !grad.allFinite()) break;
    acute -= options.kappa_grad * grad;
  }
  result.value = result.best_iteration == 0
                     ? m.value
                     : ValueFunctionParams::make(m.value.kernels, llt.solve(best_acute));
  return result;
}

}  // namespace gpstab
