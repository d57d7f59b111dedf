#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gpstab/expr.hpp"
#include "gpstab/gp_model.hpp"
#include "gpstab/kernel.hpp"
#include "gpstab/riccati.hpp"

namespace gpstab {

/// Running cost q(x) + 1/2 u^T R u.
struct CostSpec {
  BoundExpr q = BoundExpr::constant(0.0);
  Eigen::MatrixXd R;
  Eigen::MatrixXd R_inv;
  // Q with q(x) ≈ x^T Q x near the origin; used for the LQR initialization.
  Eigen::MatrixXd quadratic_part;

  // q(x) = ||x||², Q = I.
  static CostSpec squared_norm(Eigen::Index n, const Eigen::MatrixXd& R);
  // Q from a central finite-difference Hessian of q at 0 (step 1e-4), halved
  // and symmetrized. Throws NotPositiveDefinite if R is not SPD.
  static CostSpec custom(BoundExpr q, Eigen::Index n, const Eigen::MatrixXd& R);
};

/// V̂(x; α) = Σ_i α_i K^(i)(x) - Σ_i α_i K^(i)(0).
struct ValueFunctionParams {
  KernelSet kernels;
  Eigen::VectorXd alpha;
  double offset = 0.0;

  static ValueFunctionParams make(KernelSet kernels, Eigen::VectorXd alpha);
  // The BoundExpr form: a kernel sum with coefficients α plus the constant -offset.
  BoundExpr as_expr() const;
};

double value(const ValueFunctionParams& vp, const Point& x);
Eigen::VectorXd value_grad(const ValueFunctionParams& vp, const Point& x);

/// ẋ = f̂(x) + g u under û*(x) = -R^{-1} g^T p̂(x; α).
struct ClosedLoopModel {
  GpMean fhat;
  Eigen::MatrixXd g;
  ValueFunctionParams value;
  CostSpec cost;

  Eigen::Index state_dim() const { return g.rows(); }
  // g R^{-1} g^T
  Eigen::MatrixXd input_metric() const { return g * cost.R_inv * g.transpose(); }
  ClosedLoopModel with_alpha(const Eigen::VectorXd& alpha) const;
};

Eigen::VectorXd optimal_input(const ClosedLoopModel& m, const Point& x);
// p^T f̂ - 1/2 p^T g R^{-1} g^T p + q
double hjb_residual(const ClosedLoopModel& m, const Point& x);
// p^T (f̂ - g R^{-1} g^T p)
double lyapunov_derivative(const ClosedLoopModel& m, const Point& x);

struct LqrInit {
  ValueFunctionParams value;
  Eigen::MatrixXd A;  // ∂f̂/∂x at 0
  Eigen::MatrixXd P;  // V_ini(x) = x^T P x
  Eigen::MatrixXd closed_loop;
  double care_residual = 0.0;
  double normal_residual = 0.0;  // ||(Φ^TΦ + κ_α I) ά - Φ^T v||
};

// LQR of the linearized model, projected onto the kernel parameterization by
// ridge regression over `check_states` in the variable ά = K_XX α.
// The HJB above corresponds to the cost q + 1/2 u^T R u, so the Riccati
// equation is solved with R/2 and the LQR input is -R^{-1} B^T (2 P x).
LqrInit init_lqr(const GpMean& fhat, const Eigen::MatrixXd& g, const CostSpec& cost,
                 const std::vector<Point>& check_states, double kappa_alpha = 1e-3);

/// η(x) = quadratic ||x||² + constant
struct MarginSpec {
  double quadratic = 1.0;
  double constant = 5.0;
  double operator()(const Point& x) const { return quadratic * x.squaredNorm() + constant; }
};

struct SynthesisOptions {
  double kappa = 500.0;
  double kappa_grad = 1e-5;
  int iterations = 10000;
  MarginSpec eta;
  // The Lyapunov penalty skips check states at the origin, where
  // H_V̇ = 0 < η makes the inequality unsatisfiable.
  bool skip_origin_in_penalty = true;
};

struct ObjectiveTerms {
  double objective = 0.0;
  double hjb = 0.0;        // Σ_k H_HJB(x_k)²
  double lyapunov = 0.0;   // κ max_k max{0, H_V̇(x_k) + η(x_k)}²
  int worst_state = -1;    // index attaining the penalty (lowest on ties), -1 if none
};

/// The synthesis objective over fixed check states, with everything that does
/// not depend on α precomputed.
class SynthesisObjective {
 public:
  SynthesisObjective(const ClosedLoopModel& m, const std::vector<Point>& check_states,
                     const SynthesisOptions& options);

  ObjectiveTerms eval(const Eigen::VectorXd& alpha) const;
  // Value and gradient with respect to α.
  ObjectiveTerms eval(const Eigen::VectorXd& alpha, Eigen::VectorXd& grad_alpha) const;
  // Gradient with respect to ά = K_XX α.
  ObjectiveTerms eval_acute(const Eigen::VectorXd& alpha_acute, Eigen::VectorXd& grad_acute) const;

  const Eigen::LLT<Eigen::MatrixXd>& gram_llt() const { return llt_; }
  std::size_t state_count() const { return states_.size(); }

 private:
  struct State {
    Eigen::MatrixXd grads;  // n x D
    Eigen::VectorXd f;
    double q = 0.0;
    double eta = 0.0;
    bool in_penalty = true;
  };
  std::vector<State> states_;
  Eigen::MatrixXd metric_;
  double kappa_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct SynthesisRecord {
  int iteration = 0;
  ObjectiveTerms terms;
};

struct SynthesisResult {
  ValueFunctionParams value;
  std::vector<SynthesisRecord> trace;  // one record per evaluated iterate, starting at 0
  double initial_objective = 0.0;
  double best_objective = 0.0;
  int best_iteration = 0;
};

// Steepest descent on ά = K_XX α with constant step κ_grad; returns the best
// iterate. The starting α comes from m.value.
SynthesisResult synthesize(const ClosedLoopModel& m, const std::vector<Point>& check_states,
                           const SynthesisOptions& options);

}  // namespace gpstab
