#include "gpstab/gp_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "gpstab/errors.hpp"

namespace gpstab {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& k) {
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Gram matrix is not positive definite");
  // LLT does not always flag a numerically singular matrix.
  const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
  if (!(d.array() > 0.0).all() || !d.allFinite() ||
      d.minCoeff() <= 1e-12 * std::sqrt(k.diagonal().maxCoeff())) {
    throw NotPositiveDefinite("Gram matrix is numerically singular");
  }
  return llt;
}

}  // namespace

void TrainingSet::validate() const {
  if (inputs.rows() != outputs.rows()) throw std::invalid_argument("training set: row count mismatch");
  if (inputs.rows() == 0) throw std::invalid_argument("training set is empty");
  if (!inputs.allFinite() || !outputs.allFinite()) {
    throw std::invalid_argument("training set contains non-finite values");
  }
}

TrainingSet sample_training_set(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                const std::vector<Point>& inputs, double noise_halfwidth,
                                std::uint64_t seed) {
  if (inputs.empty()) throw std::invalid_argument("sample_training_set: no inputs");
  std::mt19937_64 rng(seed);
  const auto n = inputs.front().size();
  TrainingSet ts;
  ts.inputs.resize(static_cast<Eigen::Index>(inputs.size()), n);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ts.inputs.row(r) = inputs[i].transpose();
    Eigen::VectorXd y = f(inputs[i]);
    if (ts.outputs.size() == 0) ts.outputs.resize(ts.inputs.rows(), y.size());
    for (Eigen::Index d = 0; d < y.size(); ++d) {
      y[d] += noise_halfwidth * (2.0 * uniform01(rng) - 1.0);
    }
    ts.outputs.row(r) = y.transpose();
  }
  return ts;
}

Hyperparams Hyperparams::from_values(const Eigen::VectorXd& sigma_w_diag, double sigma_f, double sigma_n) {
  Hyperparams hp;
  hp.theta.resize(sigma_w_diag.size() + 2);
  hp.theta.head(sigma_w_diag.size()) = 0.5 * sigma_w_diag.array().log();
  hp.theta[sigma_w_diag.size()] = std::log(sigma_f);
  hp.theta[sigma_w_diag.size() + 1] = std::log(sigma_n);
  return hp;
}

Hyperparams Hyperparams::initial(Eigen::Index n) {
  Hyperparams hp;
  hp.theta = Eigen::VectorXd::Zero(n + 2);
  hp.theta[n + 1] = std::log(0.1);
  return hp;
}

Eigen::VectorXd Hyperparams::inv_lengthscale() const {
  return (-2.0 * theta.head(input_dim()).array()).exp();
}

double Hyperparams::amplitude() const { return std::exp(theta[input_dim()]); }
double Hyperparams::noise_std() const { return std::exp(theta[input_dim() + 1]); }

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& inputs, const Hyperparams& hp) {
  if (inputs.rows() < 1) throw std::invalid_argument("gram_matrix: no inputs");
  if (inputs.cols() != hp.input_dim()) throw std::invalid_argument("gram_matrix: dimension mismatch");
  const KernelSet ks(inputs, hp.amplitude(), hp.inv_lengthscale());
  Eigen::MatrixXd k = ks.self_gram();
  k.diagonal().array() += hp.noise_std() * hp.noise_std();
  factor(k);
  return k;
}

GpMean::GpMean(KernelSet kernels, Eigen::MatrixXd weights, Eigen::MatrixXd gram)
    : kernels_(std::move(kernels)), weights_(std::move(weights)), gram_(std::move(gram)), llt_(gram_) {}

Eigen::VectorXd GpMean::eval(const Point& x) const {
  return weights_.transpose() * kernels_.values(x);
}

Eigen::MatrixXd GpMean::jacobian(const Point& x) const {
  return weights_.transpose() * kernels_.gradients(x).transpose();
}

BoundExpr GpMean::component_expr(Eigen::Index j) const {
  std::vector<BoundExpr> leaves;
  std::vector<double> coeffs;
  leaves.reserve(static_cast<std::size_t>(kernels_.size()));
  for (Eigen::Index i = 0; i < kernels_.size(); ++i) {
    leaves.push_back(BoundExpr::kernel(kernels_.kernel(i)));
    coeffs.push_back(weights_(i, j));
  }
  return BoundExpr::sum(std::move(leaves), std::move(coeffs));
}

std::vector<BoundExpr> GpMean::as_exprs() const {
  std::vector<BoundExpr> out;
  for (Eigen::Index j = 0; j < output_dim(); ++j) out.push_back(component_expr(j));
  return out;
}

GpMean fit_mean(const TrainingSet& ts, const Hyperparams& hp) {
  ts.validate();
  Eigen::MatrixXd k = gram_matrix(ts.inputs, hp);
  const Eigen::LLT<Eigen::MatrixXd> llt = factor(k);
  Eigen::MatrixXd w = llt.solve(ts.outputs);
  return GpMean(KernelSet(ts.inputs, hp.amplitude(), hp.inv_lengthscale()), std::move(w), std::move(k));
}

ObjectiveValue neg_objective(const TrainingSet& ts, const Hyperparams& hp, double kappa_theta) {
  ts.validate();
  const Eigen::Index n = hp.input_dim();
  const Eigen::Index d = ts.size();
  const Eigen::Index m = ts.output_dim();
  if (ts.input_dim() != n) throw std::invalid_argument("neg_objective: dimension mismatch");

  const KernelSet ks(ts.inputs, hp.amplitude(), hp.inv_lengthscale());
  const Eigen::MatrixXd k_tilde = ks.self_gram();
  const double noise_var = hp.noise_std() * hp.noise_std();
  Eigen::MatrixXd k = k_tilde;
  k.diagonal().array() += noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt = factor(k);

  const Eigen::MatrixXd a = llt.solve(ts.outputs);
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();

  ObjectiveValue out;
  out.value = 0.5 * (ts.outputs.cwiseProduct(a)).sum() +
              static_cast<double>(m) * (0.5 * log_det + 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));

  // d/dθ of the summed NLL is 1/2 tr((m K^{-1} - A A^T) dK/dθ).
  const Eigen::MatrixXd k_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd w = static_cast<double>(m) * k_inv - a * a.transpose();

  out.gradient = Eigen::VectorXd::Zero(n + 2);
  const Eigen::VectorXd inv_ls = hp.inv_lengthscale();
  for (Eigen::Index dim = 0; dim < n; ++dim) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = ts.inputs(i, dim) - ts.inputs(j, dim);
        acc += w(i, j) * k_tilde(i, j) * diff * diff;
      }
    }
    out.gradient[dim] = 0.5 * acc * inv_ls[dim];
  }
  out.gradient[n] = 0.5 * w.cwiseProduct(k_tilde).sum();
  out.gradient[n + 1] = 0.5 * w.trace() * 2.0 * noise_var;

  for (Eigen::Index j = 0; j <= n; ++j) {
    out.value += kappa_theta * hp.theta[j] * hp.theta[j];
    out.gradient[j] += 2.0 * kappa_theta * hp.theta[j];
  }
  return out;
}

HyperparamFit optimize_hyperparams(const TrainingSet& ts, const Hyperparams& theta_ini, int budget,
                                   double kappa_theta) {
  if (budget < 1) throw std::invalid_argument("optimize_hyperparams: budget must be >= 1");
  HyperparamFit fit;
  fit.hp = theta_ini;

  int evals = 0;
  auto evaluate = [&](const Eigen::VectorXd& theta, ObjectiveValue& out) {
    ++evals;
    try {
      out = neg_objective(ts, Hyperparams{theta}, kappa_theta);
      return std::isfinite(out.value) && out.gradient.allFinite();
    } catch (const NotPositiveDefinite&) {
      return false;
    }
  };

  ObjectiveValue cur;
  if (!evaluate(theta_ini.theta, cur)) {
    fit.initial_objective = fit.final_objective = std::numeric_limits<double>::infinity();
    fit.evaluations = evals;
    return fit;
  }
  fit.initial_objective = fit.final_objective = cur.value;

  Eigen::VectorXd theta = theta_ini.theta;
  Eigen::VectorXd dir = -cur.gradient;
  const Eigen::Index restart_every = theta.size();
  Eigen::Index since_restart = 0;
  double step = 1.0 / std::max(1.0, dir.norm());
  constexpr double armijo_c = 1e-4;

  while (evals < budget) {
    if (cur.gradient.norm() < 1e-10) break;
    double slope = cur.gradient.dot(dir);
    if (slope >= 0.0) {
      dir = -cur.gradient;
      slope = -cur.gradient.squaredNorm();
      since_restart = 0;
    }

    bool accepted = false;
    ObjectiveValue trial;
    Eigen::VectorXd candidate;
    while (evals < budget && step > 1e-16) {
      candidate = theta + step * dir;
      if (evaluate(candidate, trial) && trial.value <= cur.value + armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd g_old = cur.gradient;
    theta = candidate;
    cur = trial;
    if (cur.value < fit.final_objective) {
      fit.final_objective = cur.value;
      fit.hp.theta = theta;
    }

    ++since_restart;
    double beta = 0.0;
    if (since_restart < restart_every) {
      beta = std::max(0.0, cur.gradient.dot(cur.gradient - g_old) / g_old.squaredNorm());
    } else {
      since_restart = 0;
    }
    dir = -cur.gradient + beta * dir;
    double new_slope = cur.gradient.dot(dir);
    if (new_slope >= 0.0) {
      dir = -cur.gradient;
      new_slope = -cur.gradient.squaredNorm();
      since_restart = 0;
    }
    // Carry the previous step's first-order decrease over to the new direction.
    step = std::min(2.0 * step * slope / new_slope, 1e3);
  }
  fit.evaluations = evals;
  return fit;
}

}  // namespace gpstab
