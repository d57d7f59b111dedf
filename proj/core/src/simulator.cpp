#include "gpstab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "gpstab/errors.hpp"

namespace gpstab {

void PlantSpec::validate() const {
  if (!f_true) throw std::invalid_argument("plant: missing dynamics");
  if (!(dt > 0.0)) throw std::invalid_argument("plant: dt must be positive");
  if (!(horizon >= dt)) throw std::invalid_argument("plant: horizon must be at least dt");
  if (!(convergence_radius > 0.0) || !(divergence_radius > 0.0) || !(settle_radius >= 0.0)) {
    throw std::invalid_argument("plant: radii must be positive");
  }
}

PlantSpec pendulum_plant() {
  PlantSpec p;
  p.f_true = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd dx(2);
    dx << x[1], -(9.8 * std::sin(x[0]) + x[1]);
    return dx;
  };
  p.g_true = Eigen::Vector2d(0.0, 1.0);
  return p;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::converged:
      return "converged";
    case Outcome::diverged:
      return "diverged";
    case Outcome::timeout:
      return "timeout";
  }
  return "unknown";
}

Trajectory simulate(const PlantSpec& plant, const ClosedLoopModel& controller, const Point& x0) {
  plant.validate();
  if (!x0.allFinite()) throw NonFiniteState("initial state is not finite");
  const auto steps = static_cast<long>(std::llround(plant.horizon / plant.dt));

  Trajectory traj;
  Eigen::VectorXd x = x0;
  for (long k = 0;; ++k) {
    const Eigen::VectorXd u = optimal_input(controller, x);
    traj.times.push_back(static_cast<double>(k) * plant.dt);
    traj.states.push_back(x);
    traj.inputs.push_back(u);
    traj.values.push_back(value(controller.value, x));

    const double r = x.norm();
    if (r > plant.divergence_radius) {
      traj.outcome = Outcome::diverged;
      return traj;
    }
    if (r < plant.settle_radius || k == steps) break;

    x = x + plant.dt * (plant.f_true(x) + plant.g_true * u);
    if (!x.allFinite()) throw NonFiniteState("state became non-finite during integration");
  }
  traj.outcome = traj.final_state().norm() < plant.convergence_radius ? Outcome::converged : Outcome::timeout;
  return traj;
}

std::vector<TrajectorySummary> sweep(const PlantSpec& plant, const ClosedLoopModel& controller,
                                     const std::vector<Point>& initial_states, unsigned threads) {
  std::vector<TrajectorySummary> out(initial_states.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      TrajectorySummary& s = out[i];
      s.x0 = initial_states[i];
      try {
        const Trajectory t = simulate(plant, controller, initial_states[i]);
        s.outcome = t.outcome;
        s.final_state = t.final_state();
        s.final_time = t.times.back();
        s.steps = t.times.size() - 1;
      } catch (const std::exception& e) {
        s.outcome = Outcome::diverged;
        s.error = e.what();
      }
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1 || initial_states.size() < 2) {
    run(0, out.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (out.size() + threads - 1) / threads;
  for (std::size_t begin = 0; begin < out.size(); begin += chunk) {
    pool.emplace_back(run, begin, std::min(out.size(), begin + chunk));
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace gpstab
