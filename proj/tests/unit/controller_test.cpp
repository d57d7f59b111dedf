#include <cmath>

#include <gtest/gtest.h>

#include "gpstab/controller.hpp"
#include "gpstab/pipeline.hpp"
#include "random_cases.hpp"

namespace gpstab {
namespace {

std::vector<Point> random_states(testing::Rng& rng, int count, Eigen::Index n) {
  std::vector<Point> xs;
  for (int i = 0; i < count; ++i) xs.push_back(testing::uniform_vector(rng, n, -1.5, 1.5));
  return xs;
}

TEST(ValueFunction, ZeroAtOriginForAnyAlpha) {
  testing::Rng rng(60);
  for (int c = 0; c < 50; ++c) {
    const ClosedLoopModel m = testing::random_model(rng, 1 + c % 3, 1, 6);
    EXPECT_EQ(value(m.value, Eigen::VectorXd::Zero(m.state_dim())), 0.0);
  }
}

TEST(ValueFunction, OneHotAlphaIsShiftedKernel) {
  testing::Rng rng(61);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 5);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
  e[0] = 1.0;
  const ValueFunctionParams vp = ValueFunctionParams::make(m.value.kernels, e);
  const KernelSpec k = vp.kernels.kernel(0);
  for (int i = 0; i < 20; ++i) {
    const Point x = testing::uniform_vector(rng, 2, -2, 2);
    EXPECT_NEAR(value(vp, x), kernel_eval(k, x) - kernel_eval(k, Eigen::Vector2d::Zero()), 1e-15);
  }
}

TEST(ValueFunction, ExpressionFormAgrees) {
  testing::Rng rng(62);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 7);
  const BoundExpr e = m.value.as_expr();
  for (int i = 0; i < 100; ++i) {
    const Point x = testing::uniform_vector(rng, 2, -2, 2);
    EXPECT_NEAR(expr_eval(e, x), value(m.value, x), 1e-12);
  }
}

TEST(ValueFunction, GradientMatchesCentralDifferences) {
  testing::Rng rng(63);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const ClosedLoopModel m = testing::random_model(rng, 1 + i % 3, 1, 5);
    const Eigen::Index n = m.state_dim();
    const Point x = testing::uniform_vector(rng, n, -1.5, 1.5);
    const Eigen::VectorXd g = value_grad(m.value, x);
    for (Eigen::Index j = 0; j < n; ++j) {
      Point xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (value(m.value, xp) - value(m.value, xm)) / (2 * h);
      EXPECT_NEAR(g[j], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(OptimalInput, ZeroGradientGivesZeroInput) {
  testing::Rng rng(64);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 4).with_alpha(Eigen::VectorXd::Zero(4));
  EXPECT_EQ(optimal_input(m, Eigen::Vector2d(0.3, 0.1)).norm(), 0.0);
}

TEST(OptimalInput, VerticalInputPicksSecondComponent) {
  testing::Rng rng(65);
  ClosedLoopModel m = testing::random_model(rng, 2, 1, 6);
  m.g = Eigen::Vector2d(0, 1);
  m.cost = CostSpec::squared_norm(2, Eigen::MatrixXd::Identity(1, 1));
  const Point x(Eigen::Vector2d(0.4, -0.2));
  EXPECT_NEAR(optimal_input(m, x)[0], -value_grad(m.value, x)[1], 1e-15);
}

TEST(OptimalInput, MatchesDirectArithmetic) {
  testing::Rng rng(66);
  for (int c = 0; c < 50; ++c) {
    const ClosedLoopModel m = testing::random_model(rng, 3, 2, 6);
    const Point x = testing::uniform_vector(rng, 3, -1, 1);
    const Eigen::VectorXd p = value_grad(m.value, x);
    const Eigen::VectorXd ref = -m.cost.R.llt().solve(m.g.transpose() * p);
    EXPECT_LT((optimal_input(m, x) - ref).norm(), 1e-13 * std::max(1.0, ref.norm()));
  }
}

TEST(HjbResidual, ZeroAlphaLeavesStateCost) {
  testing::Rng rng(67);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 5).with_alpha(Eigen::VectorXd::Zero(5));
  const Point x(Eigen::Vector2d(1.5, -0.5));
  EXPECT_DOUBLE_EQ(hjb_residual(m, x), x.squaredNorm());
}

TEST(HjbResidual, AtOriginStateCostDrops) {
  testing::Rng rng(68);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 5);
  const Point z = Eigen::Vector2d::Zero();
  const Eigen::VectorXd p = value_grad(m.value, z);
  const Eigen::VectorXd gtp = m.g.transpose() * p;
  EXPECT_NEAR(hjb_residual(m, z), p.dot(m.fhat.eval(z)) - 0.5 * gtp.dot(m.cost.R.inverse() * gtp), 1e-14);
}

TEST(HjbResidual, MatchesTermByTermOracle) {
  testing::Rng rng(69);
  for (int c = 0; c < 100; ++c) {
    const ClosedLoopModel m = testing::random_model(rng, 2, 2, 6);
    const Point x = testing::uniform_vector(rng, 2, -1.5, 1.5);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < 6; ++i) p += m.value.alpha[i] * kernel_grad(m.value.kernels.kernel(i), x);
    const Eigen::MatrixXd Rinv = m.cost.R.inverse();
    const double ref = p.dot(m.fhat.eval(x)) - 0.5 * p.dot(m.g * Rinv * m.g.transpose() * p) + x.squaredNorm();
    EXPECT_NEAR(hjb_residual(m, x), ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(LyapunovDerivative, ZeroAlphaIsZero) {
  testing::Rng rng(70);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 5).with_alpha(Eigen::VectorXd::Zero(5));
  EXPECT_EQ(lyapunov_derivative(m, Eigen::Vector2d(0.7, 0.2)), 0.0);
}

TEST(LyapunovDerivative, IdentityWithHjbResidual) {
  testing::Rng rng(71);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 8);
  for (int i = 0; i < 1000; ++i) {
    const Point x = testing::uniform_vector(rng, 2, -2, 2);
    const Eigen::VectorXd p = value_grad(m.value, x);
    const Eigen::VectorXd gtp = m.g.transpose() * p;
    const double rhs = hjb_residual(m, x) - x.squaredNorm() - 0.5 * gtp.dot(m.cost.R_inv * gtp);
    EXPECT_NEAR(lyapunov_derivative(m, x), rhs, 1e-10);
  }
}

TEST(LyapunovDerivative, NegativeForStableToy) {
  // f̂ ≈ -x near the origin from a GP fitted on that field, V̂ a positive
  // bump-shaped well (α = -1 on a kernel at the origin).
  Box b{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  const auto pts = grid_points(b, {5, 5});
  TrainingSet ts;
  ts.inputs.resize(25, 2);
  ts.outputs.resize(25, 2);
  for (int i = 0; i < 25; ++i) {
    ts.inputs.row(i) = pts[static_cast<std::size_t>(i)].transpose();
    ts.outputs.row(i) = -pts[static_cast<std::size_t>(i)].transpose();
  }
  const GpMean gp = fit_mean(ts, Hyperparams::from_values(Eigen::Vector2d(1, 1), 1.0, 1e-3));
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(25);
  alpha[12] = -1.0;  // the center node
  const ClosedLoopModel m{gp, Eigen::MatrixXd::Zero(2, 1), ValueFunctionParams::make(gp.kernels(), alpha),
                          CostSpec::squared_norm(2, Eigen::MatrixXd::Identity(1, 1))};
  testing::Rng rng(72);
  for (int i = 0; i < 200; ++i) {
    const Point x = testing::uniform_vector(rng, 2, -0.8, 0.8);
    if (x.norm() < 1e-3) continue;
    EXPECT_GT(value(m.value, x), 0.0);
    EXPECT_LT(lyapunov_derivative(m, x), 0.0);
  }
}

TEST(CostSpec, CustomQuadraticPart) {
  // q = 2 x1² + x1 x2 + 3 x2² has Q = [[2, 0.5], [0.5, 3]].
  const BoundExpr x1 = BoundExpr::linear(Eigen::Vector2d(1, 0), 0);
  const BoundExpr x2 = BoundExpr::linear(Eigen::Vector2d(0, 1), 0);
  const BoundExpr q = BoundExpr::sum({BoundExpr::product({x1, x1}), BoundExpr::product({x1, x2}), BoundExpr::product({x2, x2})},
                                     {2.0, 1.0, 3.0});
  const CostSpec c = CostSpec::custom(q, 2, Eigen::MatrixXd::Identity(1, 1));
  EXPECT_NEAR(c.quadratic_part(0, 0), 2.0, 1e-6);
  EXPECT_NEAR(c.quadratic_part(0, 1), 0.5, 1e-6);
  EXPECT_NEAR(c.quadratic_part(1, 1), 3.0, 1e-6);
  EXPECT_THROW(CostSpec::custom(q, 2, -Eigen::MatrixXd::Identity(1, 1)), NotPositiveDefinite);
  const CostSpec sq = CostSpec::squared_norm(2, Eigen::MatrixXd::Identity(1, 1));
  EXPECT_EQ(sq.quadratic_part, Eigen::MatrixXd::Identity(2, 2));
}

TEST(SynthesisObjective, GradientMatchesCentralDifferences) {
  testing::Rng rng(73);
  int checked = 0;
  for (int c = 0; c < 20; ++c) {
    const ClosedLoopModel m = testing::random_model(rng, 2, 1, 6);
    const std::vector<Point> xs = random_states(rng, 15, 2);
    SynthesisOptions opts;
    opts.kappa = 5.0;
    opts.eta = MarginSpec{0.1, 0.2};
    const SynthesisObjective obj(m, xs, opts);
    Eigen::VectorXd grad;
    const Eigen::VectorXd alpha = m.value.alpha * 3.0;
    obj.eval(alpha, grad);
    Eigen::VectorXd acute_grad;
    const Eigen::VectorXd acute = m.fhat.gram() * alpha;
    obj.eval_acute(acute, acute_grad);
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(alpha[i]));
      Eigen::VectorXd ap = alpha, am = alpha;
      ap[i] += h;
      am[i] -= h;
      const double fd = (obj.eval(ap).objective - obj.eval(am).objective) / (2 * h);
      EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));

      const double ha = 1e-6 * std::max(1.0, std::abs(acute[i]));
      Eigen::VectorXd cp = acute, cm = acute;
      cp[i] += ha;
      cm[i] -= ha;
      Eigen::VectorXd unused;
      const double fda = (obj.eval_acute(cp, unused).objective - obj.eval_acute(cm, unused).objective) / (2 * ha);
      EXPECT_NEAR(acute_grad[i], fda, 1e-5 * std::max(1.0, std::abs(fda)));
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(SynthesisObjective, PenaltyUsesWorstState) {
  testing::Rng rng(74);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 6);
  const std::vector<Point> xs = random_states(rng, 30, 2);
  SynthesisOptions opts;
  opts.kappa = 2.0;
  const SynthesisObjective obj(m, xs, opts);
  const ObjectiveTerms t = obj.eval(m.value.alpha);
  double hjb = 0.0, worst = 0.0;
  int arg = -1;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    hjb += std::pow(hjb_residual(m, xs[k]), 2);
    const double v = std::max(0.0, lyapunov_derivative(m, xs[k]) + opts.eta(xs[k]));
    if (v > worst) {
      worst = v;
      arg = static_cast<int>(k);
    }
  }
  EXPECT_NEAR(t.hjb, hjb, 1e-10 * hjb);
  EXPECT_NEAR(t.lyapunov, 2.0 * worst * worst, 1e-10 * (1 + worst * worst));
  EXPECT_EQ(t.worst_state, arg);
  EXPECT_NEAR(t.objective, t.hjb + t.lyapunov, 1e-12 * t.objective);
}

TEST(Synthesize, StationaryStartIsKept) {
  testing::Rng rng(75);
  ClosedLoopModel m = testing::random_model(rng, 2, 1, 6).with_alpha(Eigen::VectorXd::Zero(6));
  m.cost = CostSpec::custom(BoundExpr::constant(0.0), 2, Eigen::MatrixXd::Identity(1, 1));
  SynthesisOptions opts;
  opts.kappa = 0.0;
  opts.iterations = 50;
  const SynthesisResult r = synthesize(m, random_states(rng, 20, 2), opts);
  EXPECT_EQ(r.value.alpha, m.value.alpha);
  EXPECT_EQ(r.initial_objective, 0.0);
  EXPECT_EQ(r.best_iteration, 0);
}

TEST(Synthesize, BestSoFarIsMonotone) {
  testing::Rng rng(76);
  const ClosedLoopModel m = testing::random_model(rng, 2, 1, 8);
  SynthesisOptions opts;
  opts.kappa = 10.0;
  opts.kappa_grad = 1e-3;
  opts.iterations = 300;
  const std::vector<Point> xs = random_states(rng, 25, 2);
  const SynthesisResult r = synthesize(m, xs, opts);
  ASSERT_EQ(r.trace.size(), 301u);
  double best = r.trace.front().terms.objective;
  for (const auto& rec : r.trace) {
    best = std::min(best, rec.terms.objective);
    EXPECT_LE(r.best_objective, rec.terms.objective);
  }
  EXPECT_EQ(best, r.best_objective);
  EXPECT_EQ(r.trace[static_cast<std::size_t>(r.best_iteration)].terms.objective, r.best_objective);
  // The returned α reproduces the recorded best objective.
  const SynthesisObjective obj(m, xs, opts);
  EXPECT_NEAR(obj.eval(r.value.alpha).objective, r.best_objective, 1e-8 * r.best_objective);
}

class PendulumController : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new PipelineConfig(default_config());
    const TrainingSet ts = generate_data(*cfg_);
    gp_ = new GpMean(fit_mean(ts, fit_hyperparameters(*cfg_, ts).hp));
  }
  static void TearDownTestSuite() {
    delete gp_;
    delete cfg_;
  }
  static PipelineConfig* cfg_;
  static GpMean* gp_;
};
PipelineConfig* PendulumController::cfg_ = nullptr;
GpMean* PendulumController::gp_ = nullptr;

TEST_F(PendulumController, CheckStatesFormSquareGrid) {
  const auto xs = check_states(*cfg_);
  EXPECT_EQ(xs.size(), 441u);
}

TEST_F(PendulumController, LqrInitializationIsStabilizing) {
  const LqrInit init = init_lqr(*gp_, cfg_->g, cost_for(*cfg_), check_states(*cfg_), cfg_->kappa_alpha);
  EXPECT_TRUE(is_hurwitz(init.closed_loop));
  EXPECT_LE(init.care_residual, 1e-8);
  EXPECT_LE(init.normal_residual, 1e-8);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(init.P).eigenvalues().minCoeff(), 0.0);
  // The kernel fit tracks x^T P x on the check states it was fitted to.
  double num = 0.0, den = 0.0;
  for (const auto& x : check_states(*cfg_)) {
    const double v = x.dot(init.P * x);
    num += std::pow(value(init.value, x) - v, 2);
    den += v * v;
  }
  EXPECT_LT(std::sqrt(num / den), 0.05);
}

TEST_F(PendulumController, DefaultSynthesisImprovesObjective) {
  const LqrInit init = init_lqr(*gp_, cfg_->g, cost_for(*cfg_), check_states(*cfg_), cfg_->kappa_alpha);
  const ClosedLoopModel m = base_model(*cfg_, *gp_).with_alpha(init.value.alpha);
  const SynthesisResult r = synthesize(m, check_states(*cfg_), cfg_->synthesis);
  EXPECT_EQ(cfg_->synthesis.iterations, 10000);
  EXPECT_LT(r.best_objective, r.initial_objective);
  const SynthesisObjective obj(m, check_states(*cfg_), cfg_->synthesis);
  EXPECT_NEAR(obj.eval(r.value.alpha).objective, r.best_objective, 1e-6 * r.best_objective);
}

}  // namespace
}  // namespace gpstab
