#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gpstab/expr.hpp"
#include "gpstab/kernel.hpp"

namespace gpstab {

/// D samples x^(i) (rows of `inputs`) with observed derivatives f_d^(i)
/// (rows of `outputs`).
struct TrainingSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd outputs;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  Eigen::Index output_dim() const { return outputs.cols(); }
  // Throws std::invalid_argument on a count mismatch or non-finite entries.
  void validate() const;
};

// Evaluates `f` at each input and adds independent uniform noise on
// [-noise_halfwidth, noise_halfwidth] per component. Deterministic in `seed`.
TrainingSet sample_training_set(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                const std::vector<Point>& inputs, double noise_halfwidth,
                                std::uint64_t seed);

/// Log-parameterized hyperparameters
///   theta = (1/2 ln Σ_w,11, ..., 1/2 ln Σ_w,nn, ln σ_f, ln σ_n).
struct Hyperparams {
  Eigen::VectorXd theta;

  static Hyperparams from_values(const Eigen::VectorXd& sigma_w_diag, double sigma_f, double sigma_n);
  // θ = (0, ..., 0, ln 0.1)
  static Hyperparams initial(Eigen::Index n);

  Eigen::Index input_dim() const { return theta.size() - 2; }
  Eigen::VectorXd inv_lengthscale() const;
  double amplitude() const;
  double noise_std() const;
};

// K(x^(i), x^(j)) + δ_ij σ_n². Throws NotPositiveDefinite if a Cholesky
// factorization fails.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& inputs, const Hyperparams& hp);

/// GP posterior mean: one kernel mixture per output dimension over the
/// training-point kernels.
class GpMean {
 public:
  GpMean(KernelSet kernels, Eigen::MatrixXd weights, Eigen::MatrixXd gram);

  const KernelSet& kernels() const { return kernels_; }
  // D x m; column j holds K_XX^{-1} [f_d]_j.
  const Eigen::MatrixXd& weights() const { return weights_; }
  // Gram matrix including the noise diagonal.
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::LLT<Eigen::MatrixXd>& gram_llt() const { return llt_; }
  Eigen::Index output_dim() const { return weights_.cols(); }

  Eigen::VectorXd eval(const Point& x) const;
  // ∂f̂/∂x, m x n.
  Eigen::MatrixXd jacobian(const Point& x) const;

  BoundExpr component_expr(Eigen::Index j) const;
  std::vector<BoundExpr> as_exprs() const;

 private:
  KernelSet kernels_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

GpMean fit_mean(const TrainingSet& ts, const Hyperparams& hp);

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

// Negative log marginal likelihood summed over output columns plus
// kappa_theta * Σ θ_j² over all entries except ln σ_n.
ObjectiveValue neg_objective(const TrainingSet& ts, const Hyperparams& hp, double kappa_theta = 3.0);

struct HyperparamFit {
  Hyperparams hp;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int evaluations = 0;
};

// Polak–Ribière+ conjugate gradient with restarts and Armijo backtracking,
// limited to `budget` objective evaluations. Returns the best point seen.
HyperparamFit optimize_hyperparams(const TrainingSet& ts, const Hyperparams& theta_ini, int budget,
                                   double kappa_theta = 3.0);

}  // namespace gpstab
