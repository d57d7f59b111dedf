#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpstab/controller.hpp"

namespace gpstab {

struct PlantSpec {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f_true;
  Eigen::MatrixXd g_true;
  double dt = 0.005;
  double horizon = 20.0;
  double convergence_radius = 0.1;
  double divergence_radius = 50.0;
  // Runs stop early once ||x|| drops below this.
  double settle_radius = 1e-6;

  // Throws std::invalid_argument unless dt > 0, horizon >= dt and the radii are positive.
  void validate() const;
};

// ẋ = (x2, -(9.8 sin x1 + x2)), g = (0, 1)
PlantSpec pendulum_plant();

enum class Outcome { converged, diverged, timeout };
const char* to_string(Outcome o);

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;  // input applied at each logged state
  std::vector<double> values;           // V̂ at each logged state
  Outcome outcome = Outcome::timeout;

  const Eigen::VectorXd& final_state() const { return states.back(); }
};

// Forward Euler x_{k+1} = x_k + dt (f(x_k) + g u(x_k)). Throws NonFiniteState.
Trajectory simulate(const PlantSpec& plant, const ClosedLoopModel& controller, const Point& x0);

struct TrajectorySummary {
  Point x0;
  Outcome outcome = Outcome::timeout;
  Eigen::VectorXd final_state;
  double final_time = 0.0;
  std::size_t steps = 0;
  std::string error;  // non-empty if the run threw
};

std::vector<TrajectorySummary> sweep(const PlantSpec& plant, const ClosedLoopModel& controller,
                                     const std::vector<Point>& initial_states, unsigned threads = 1);

}  // namespace gpstab
