// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpstab/csv.hpp"
#include "gpstab/pipeline.hpp"
#include "gpstab/riccati.hpp"
#include "random_cases.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpstab;
namespace tc = gpstab::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// ---------------------------------------------------------------------------

Verdict kernel_formulas() {
  tc::Rng rng(1001);
  double worst = 0.0, worst_ratio = 0.0;
  const double ratio = std::exp(1.5) / 2.0;
  for (int c = 0; c < 1000; ++c) {
    const double sf = std::exp(tc::uniform(rng, std::log(1e-2), std::log(1e2)));
    const double lam = std::exp(tc::uniform(rng, std::log(1e-3), std::log(1e3)));
    const double tau = std::exp(tc::uniform(rng, std::log(1e-5), std::log(1.0)));
    const Eigen::Index N = std::uniform_int_distribution<Eigen::Index>(2, 6)(rng);
    const BoundPair b = kernel_bounds(sf, lam, tau, N);
    const double nm1 = static_cast<double>(N - 1);
    worst = std::max(worst, rel_err(b.lower, std::exp(-1.5) * nm1 * sf * lam * tau * tau));
    worst = std::max(worst, rel_err(b.upper, nm1 * sf * lam * tau * tau / 2.0));
    worst_ratio = std::max(worst_ratio, rel_err(b.upper / b.lower, ratio));
  }
  return {worst <= 1e-14 && worst_ratio <= 1e-12,
          "1000 tuples, max rel err " + fmt("%.2e", worst) + ", ratio err " + fmt("%.2e", worst_ratio)};
}

Verdict soundness() {
  tc::Rng rng(1002);
  tc::SandwichStats stats;
  for (int c = 0; c < 300; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const Point center = tc::uniform_vector(rng, n, -1, 1);
    const BoundExpr e = tc::random_expr(rng, center, 1.0, c % 5);
    const Simplex s = tc::random_simplex(rng, center, tc::uniform(rng, 0.01, 0.5));
    tc::check_sandwich([&e](const Point& x) { return expr_eval(e, x); }, expr_bounds(e, s), s, rng, 2000, stats);
  }
  for (int c = 0; c < 200; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const ClosedLoopModel m = tc::random_model(rng, n, 1 + c % 2, 5);
    const Simplex s = tc::random_simplex(rng, tc::uniform_vector(rng, n, -1, 1), tc::uniform(rng, 0.01, 0.4));
    const SimplexBounds b = simplex_bounds(m, s);
    tc::check_sandwich([&m](const Point& x) { return value(m.value, x); }, b.value, s, rng, 1000, stats);
    tc::check_sandwich([&m](const Point& x) { return lyapunov_derivative(m, x); }, b.vdot, s, rng, 1000, stats);
  }
  return {stats.samples >= 1000000 && stats.violations == 0,
          std::to_string(stats.samples) + " samples, " + std::to_string(stats.violations) + " violations"};
}

Verdict second_order() {
  tc::Rng rng(1003);
  std::vector<double> taus(7);
  auto sweep = [&](const Simplex& s0, const std::function<double(const Simplex&)>& eps) {
    std::vector<double> ys;
    for (int r = 0; r <= 6; ++r) {
      const Simplex s = tc::dilate(s0, 0.1 * std::ldexp(1.0, -r) / s0.tau());
      taus[static_cast<std::size_t>(r)] = s.tau();
      ys.push_back(eps(s));
    }
    return tc::loglog_slope(taus, ys);
  };

  double kernel_dev = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const Point center = tc::uniform_vector(rng, n, -1, 1);
    const KernelSpec k = tc::random_kernel(rng, center, 1.0);
    const Simplex s0 = tc::random_simplex(rng, center, 0.1);
    kernel_dev = std::max(kernel_dev, std::abs(sweep(s0, [&k](const Simplex& s) {
                                                return kernel_simplex_bounds(k, s).upper;
                                              }) - 2.0));
  }

  double composed_min = 4.0;
  int composed = 0;
  while (composed < 50) {
    const Eigen::Index n = 1 + composed % 3;
    const Point center = tc::uniform_vector(rng, n, -1, 1);
    const BoundExpr e = tc::random_expr(rng, center, 1.0, 3);
    const Simplex s0 = tc::random_simplex(rng, center, 0.1);
    if (expr_bounds(e, tc::dilate(s0, 0.1 / 64 / s0.tau())).eps.upper == 0.0) continue;  // affine tree
    composed_min = std::min(composed_min, sweep(s0, [&e](const Simplex& s) { return expr_bounds(e, s).eps.upper; }));
    ++composed;
  }

  double cert_min = 4.0;
  for (int c = 0; c < 30; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const ClosedLoopModel m = tc::random_model(rng, n, 1, 5);
    const Simplex s0 = tc::random_simplex(rng, tc::uniform_vector(rng, n, -1, 1), 0.1);
    cert_min = std::min(cert_min, sweep(s0, [&m](const Simplex& s) { return simplex_bounds(m, s).vdot.eps.upper; }));
    cert_min = std::min(cert_min, sweep(s0, [&m](const Simplex& s) { return simplex_bounds(m, s).value.eps.lower; }));
  }
  return {kernel_dev <= 1e-9 && composed_min >= 1.9 && cert_min >= 1.9,
          "kernel |slope-2| " + fmt("%.1e", kernel_dev) + ", composed min " + fmt("%.4f", composed_min) +
              ", certifier min " + fmt("%.4f", cert_min)};
}

Verdict dual_path() {
  tc::Rng rng(1004);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const ClosedLoopModel m = tc::random_model(rng, n, 1 + c % 2, 6);
    const Simplex s = tc::random_simplex(rng, tc::uniform_vector(rng, n, -1, 1), tc::uniform(rng, 0.05, 0.5));
    const SimplexBounds fast = simplex_bounds(m, s);
    const SimplexBound gv = expr_bounds(m.value.as_expr(), s);
    const SimplexBound gh = expr_bounds(lyapunov_derivative_expr(m), s);
    for (const auto& [a, b] : {std::pair{fast.value.eps.lower, gv.eps.lower},
                               std::pair{fast.value.lower(), gv.lower()},
                               std::pair{fast.vdot.eps.upper, gh.eps.upper},
                               std::pair{fast.vdot.eps.lower, gh.eps.lower},
                               std::pair{fast.vdot.upper(), gh.upper()}}) {
      worst = std::max(worst, rel_err(a, b));
    }
  }
  return {worst <= 1e-9, "100 cases, max rel diff " + fmt("%.2e", worst)};
}

// ‖g - fd‖∞ / ‖fd‖∞ with central differences.
double fd_mismatch(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& g) {
  Eigen::VectorXd fd(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd p = x, m = x;
    p[i] += h;
    m[i] -= h;
    fd[i] = (f(p) - f(m)) / (2 * h);
  }
  const double scale = fd.cwiseAbs().maxCoeff();
  return scale == 0.0 ? (g - fd).cwiseAbs().maxCoeff() : (g - fd).cwiseAbs().maxCoeff() / scale;
}

Verdict gradients() {
  tc::Rng rng(1005);
  double worst_v = 0.0, worst_gp = 0.0, worst_obj = 0.0;
  for (int c = 0; c < 20; ++c) {
    const Eigen::Index n = 1 + c % 3;
    const ClosedLoopModel m = tc::random_model(rng, n, 1, 6);
    const Point x = tc::uniform_vector(rng, n, -1, 1);
    worst_v = std::max(worst_v, fd_mismatch([&m](const Eigen::VectorXd& y) { return value(m.value, y); }, x,
                                            value_grad(m.value, x)));
  }

  const PipelineConfig cfg = default_config();
  const TrainingSet ts = generate_data(cfg);
  for (int c = 0; c < 20; ++c) {
    const Eigen::VectorXd theta = tc::uniform_vector(rng, 4, -1.0, 1.0) + cfg.theta_ini;
    const ObjectiveValue ov = neg_objective(ts, Hyperparams{theta}, cfg.kappa_theta);
    worst_gp = std::max(worst_gp, fd_mismatch([&](const Eigen::VectorXd& t) {
                                                return neg_objective(ts, Hyperparams{t}, cfg.kappa_theta).value;
                                              },
                                              theta, ov.gradient));
  }

  for (int c = 0; c < 20; ++c) {
    const ClosedLoopModel m = tc::random_model(rng, 2, 1, 6);
    std::vector<Point> xs;
    for (int k = 0; k < 15; ++k) xs.push_back(tc::uniform_vector(rng, 2, -1, 1));
    SynthesisOptions opts;
    opts.kappa = 5.0;
    opts.eta = MarginSpec{0.1, 0.2};
    const SynthesisObjective obj(m, xs, opts);
    const Eigen::VectorXd alpha = tc::uniform_vector(rng, 6, -2, 2);
    Eigen::VectorXd grad;
    obj.eval(alpha, grad);
    worst_obj = std::max(worst_obj, fd_mismatch([&obj](const Eigen::VectorXd& a) { return obj.eval(a).objective; },
                                                alpha, grad));
  }
  const double worst = std::max({worst_v, worst_gp, worst_obj});
  return {worst <= 1e-5, "value " + fmt("%.1e", worst_v) + ", gp " + fmt("%.1e", worst_gp) + ", synthesis " +
                             fmt("%.1e", worst_obj) + " (20 points each)"};
}

Verdict riccati() {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  const double p0 = solve_care(Eigen::MatrixXd::Zero(1, 1), one, one, one).P(0, 0);
  const double p1 = solve_care(-one, one, one, one).P(0, 0);
  const bool scalar_ok = std::abs(p0 - 1.0) <= 1e-10 && std::abs(p1 - (std::sqrt(2.0) - 1.0)) <= 1e-10;

  const PipelineConfig cfg = default_config();
  const TrainingSet ts = generate_data(cfg);
  const GpMean gp = fit_mean(ts, fit_hyperparameters(cfg, ts).hp);
  const LqrInit init = init_lqr(gp, cfg.g, cost_for(cfg), check_states(cfg), cfg.kappa_alpha);
  const bool hurwitz = is_hurwitz(init.closed_loop);
  return {scalar_ok && hurwitz && init.normal_residual <= 1e-8,
          "P(A=0) err " + fmt("%.1e", std::abs(p0 - 1.0)) + ", P(A=-1) err " +
              fmt("%.1e", std::abs(p1 - (std::sqrt(2.0) - 1.0))) + ", Hurwitz " + (hurwitz ? "yes" : "no") +
              ", normal residual " + fmt("%.1e", init.normal_residual)};
}

PipelineConfig reduced_config() {
  PipelineConfig cfg = default_config();
  cfg.synthesis.iterations = 2000;
  cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  return cfg;
}

Verdict pendulum(const fs::path& dir) {
  const PipelineConfig cfg = reduced_config();
  fs::remove_all(dir);
  run_pipeline(cfg, dir);

  const CsvTable trace = read_csv(dir / "synthesis.csv");
  const json ctrl = read_json(dir / "controller.json").at("metadata");
  const double initial = trace.rows.front()[1];
  const double best = ctrl.at("best_objective").get<double>();
  const bool a = best < initial && trace.rows.size() == static_cast<std::size_t>(cfg.synthesis.iterations) + 1;

  const json cert = read_json(dir / "certificate.json");
  const json cert0 = read_json(dir / "certificate_init.json");
  const double frac = cert.at("certified_fraction").get<double>();
  const double frac0 = cert0.at("certified_fraction").get<double>();
  const bool b = frac > frac0;

  // Region simplices are never in the origin bucket (both flags are columns).
  const CsvTable cells = read_csv(dir / "certificate.csv");
  std::size_t region = 0, overlap = 0;
  for (const auto& row : cells.rows) {
    const bool in_region = row.back() != 0.0;
    const bool bucket = row[row.size() - 2] != 0.0;
    region += in_region ? 1 : 0;
    overlap += in_region && bucket ? 1 : 0;
  }
  const bool c = region > 0 && overlap == 0 && region == cert.at("region_count").get<std::size_t>();

  // V̂ must not grow over a step that starts inside the certified region. The
  // slack only absorbs round-off; the Euler O(dt²) term was never needed.
  const Triangulation t = certify_triangulation(cfg);
  const auto col = std::find(cells.header.begin(), cells.header.end(), "in_region") - cells.header.begin();
  const json sims = read_json(dir / "summary.json");
  int region_runs = 0, region_converged = 0;
  std::size_t region_steps = 0;
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (const auto& run : sims.at("runs")) {
    if (run.at("kind") != "region") continue;
    ++region_runs;
    if (!run.contains("file")) continue;  // the run threw
    const CsvTable tr = read_csv(dir / run.at("file").get<std::string>());
    const auto& last = tr.rows.back();
    const double final_norm = std::hypot(last[1], last[2]);
    if (run.at("outcome") == "converged" && final_norm < cfg.convergence_radius && last[0] <= cfg.horizon + 1e-9) {
      ++region_converged;
    }
    const std::size_t vcol = tr.rows.front().size() - 1;
    for (std::size_t k = 0; k + 1 < tr.rows.size(); ++k) {
      const auto id = t.locate(Eigen::Vector2d(tr.rows[k][1], tr.rows[k][2]));
      if (!id || cells.rows[*id][static_cast<std::size_t>(col)] == 0.0) continue;
      ++region_steps;
      const double rise = tr.rows[k + 1][vcol] - tr.rows[k][vcol];
      worst_rise = std::max(worst_rise, rise - 1e-9 * (1.0 + std::abs(tr.rows[k][vcol])));
    }
  }
  const bool d = region_runs > 0 && region_converged == region_runs && region_steps > 0 && worst_rise <= 0.0;

  std::string detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " objective " + fmt("%.4g", initial) + " -> " +
                       fmt("%.4g", best) + "; (b) " + (b ? "ok" : "FAIL") + " fraction " + fmt("%.4f", frac0) +
                       " -> " + fmt("%.4f", frac) + "; (c) " + (c ? "ok" : "FAIL") + " region " +
                       std::to_string(region) + " simplices; (d) " + (d ? "ok" : "FAIL") + " " +
                       std::to_string(region_converged) + "/" + std::to_string(region_runs) +
                       " converged, max V step in region " + fmt("%.2e", worst_rise) + " over " +
                       std::to_string(region_steps) + " steps";
  return {a && b && c && d, detail};
}

Verdict determinism(const fs::path& first, const fs::path& second) {
  const PipelineConfig cfg = reduced_config();
  fs::remove_all(second);
  run_pipeline(cfg, second);
  std::vector<std::string> differ;
  const std::vector<std::string> files = {"data.csv",         "gp.json",          "controller_init.json",
                                          "controller.json",  "certificate.csv",  "certificate.json",
                                          "certificate_init.csv", "certificate_init.json"};
  for (const auto& f : files) {
    const std::string a = slurp(first / f);
    if (a.empty() || a != slurp(second / f)) differ.push_back(f);
  }
  std::string detail = std::to_string(files.size() - differ.size()) + "/" + std::to_string(files.size()) +
                       " files byte-identical";
  for (const auto& f : differ) detail += ", differs: " + f;
  return {differ.empty(), detail};
}

}  // namespace

int main() {
  const fs::path run1 = fs::temp_directory_path() / "gpstab_acceptance_run1";
  const fs::path run2 = fs::temp_directory_path() / "gpstab_acceptance_run2";
  struct Criterion {
    int id;
    double budget_s;
    std::function<Verdict()> body;
  };
  const std::vector<Criterion> criteria = {
      {1, 1.0, kernel_formulas},
      {2, 120.0, soundness},
      {3, 60.0, second_order},
      {4, 30.0, dual_path},
      {5, 30.0, gradients},
      {6, 5.0, riccati},
      {7, 600.0, [&] { return pendulum(run1); }},
      {8, 600.0, [&] { return determinism(run1, run2); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %d: %s  %s  [%.2fs, budget %.0fs%s]\n", c.id, pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  fs::remove_all(run1);
  fs::remove_all(run2);
  return failures == 0 ? 0 : 1;
}
