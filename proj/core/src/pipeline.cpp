#include "gpstab/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "gpstab/csv.hpp"
#include "gpstab/expr_json.hpp"

namespace gpstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// unknown keys can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(label() + " must be an object");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  double number(const std::string& key, double fallback, const std::function<bool(double)>& valid,
                const char* requirement) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(label(key) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || !valid(x)) throw ConfigError(label(key) + " must be " + requirement);
    return x;
  }

  long integer(const std::string& key, long fallback, long min_value) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(label(key) + " must be an integer");
    const long x = v.get<long>();
    if (x < min_value) throw ConfigError(label(key) + " must be >= " + std::to_string(min_value));
    return x;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(label(key) + " must be a string");
    return v.get<std::string>();
  }

  Eigen::VectorXd vector(const std::string& key, const Eigen::VectorXd& fallback) {
    if (!has(key)) return fallback;
    try {
      const Eigen::VectorXd v = vector_from_json(raw(key));
      if (!v.allFinite()) throw std::invalid_argument("non-finite");
      return v;
    } catch (const std::invalid_argument&) {
      throw ConfigError(label(key) + " must be an array of finite numbers");
    }
  }

  Eigen::MatrixXd matrix(const std::string& key, const Eigen::MatrixXd& fallback) {
    if (!has(key)) return fallback;
    try {
      const Eigen::MatrixXd m = matrix_from_json(raw(key));
      if (m.size() == 0 || !m.allFinite()) throw std::invalid_argument("bad");
      return m;
    } catch (const std::invalid_argument&) {
      throw ConfigError(label(key) + " must be a nonempty array of equal-length numeric rows");
    }
  }

  ObjectReader child(const std::string& key) { return ObjectReader(has(key) ? raw(key) : empty(), label(key)); }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + label(key));
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string label() const { return path_.empty() ? "config" : path_; }
  std::string label(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

bool positive(double x) { return x > 0.0; }
bool nonnegative(double x) { return x >= 0.0; }

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return json::parse(is);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << doc.dump(2) << '\n';
}

void require(const fs::path& out, const std::string& stage, const std::string& file) {
  if (!fs::exists(out / file)) throw MissingArtifact(stage, file);
}

ClosedLoopModel load_model(const PipelineConfig& cfg, const fs::path& out, const std::string& stage,
                           const std::string& controller_file) {
  require(out, stage, controller_file);
  ClosedLoopModel m = base_model(cfg, load_gp(out, stage));
  const ValueFunctionParams vp = controller_from_json(read_json(out / controller_file));
  if (vp.alpha.size() != m.value.kernels.size()) {
    throw std::runtime_error(stage + ": " + controller_file + " does not match the GP model");
  }
  m.value = ValueFunctionParams::make(m.value.kernels, vp.alpha);
  return m;
}

}  // namespace

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.theta_ini = Hyperparams::initial(2).theta;
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  json doc;
  doc["box"] = {{"lower", vector_to_json(cfg.box.lower)}, {"upper", vector_to_json(cfg.box.upper)}};
  doc["plant"] = cfg.plant;
  doc["seed"] = cfg.seed;
  doc["data"] = {{"step", cfg.data_step}, {"noise_halfwidth", cfg.noise_halfwidth}};
  doc["gp"] = {{"budget", cfg.gp_budget}, {"kappa_theta", cfg.kappa_theta}, {"theta_ini", vector_to_json(cfg.theta_ini)}};
  doc["check"] = {{"step", cfg.check_step}};
  doc["control"] = {{"g", matrix_to_json(cfg.g)}, {"R", matrix_to_json(cfg.R)}};
  doc["lqr"] = {{"kappa_alpha", cfg.kappa_alpha}};
  doc["synthesis"] = {{"kappa", cfg.synthesis.kappa},
                      {"kappa_grad", cfg.synthesis.kappa_grad},
                      {"iterations", cfg.synthesis.iterations},
                      {"eta", {{"quadratic", cfg.synthesis.eta.quadratic}, {"constant", cfg.synthesis.eta.constant}}},
                      {"skip_origin_in_penalty", cfg.synthesis.skip_origin_in_penalty}};
  doc["certify"] = {{"step", cfg.certify_step}, {"margin", cfg.certify_margin}, {"max_depth", cfg.certify_max_depth}};
  doc["simulation"] = {{"dt", cfg.dt},
                       {"horizon", cfg.horizon},
                       {"convergence_radius", cfg.convergence_radius},
                       {"divergence_radius", cfg.divergence_radius},
                       {"grid_points", cfg.sim_grid_points}};
  doc["output_dir"] = cfg.output_dir;
  doc["threads"] = cfg.threads;
  return doc;
}

PipelineConfig config_from_json(const json& doc) {
  PipelineConfig cfg = default_config();
  ObjectReader root(doc, "");

  {
    ObjectReader r = root.child("box");
    cfg.box.lower = r.vector("lower", cfg.box.lower);
    cfg.box.upper = r.vector("upper", cfg.box.upper);
    r.finish();
    if (cfg.box.lower.size() != cfg.box.upper.size() || cfg.box.lower.size() == 0) {
      throw ConfigError("box.lower and box.upper must have the same nonzero length");
    }
    if (!(cfg.box.lower.array() < cfg.box.upper.array()).all()) {
      throw ConfigError("box.lower must be below box.upper in every dimension");
    }
  }
  cfg.plant = root.string("plant", cfg.plant);
  if (cfg.plant != "pendulum") throw ConfigError("plant must be \"pendulum\"");
  if (cfg.box.lower.size() != 2) throw ConfigError("the pendulum plant needs a 2-D box");
  if (root.has("seed")) {
    const json& s = root.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("seed must be a nonnegative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  {
    ObjectReader r = root.child("data");
    cfg.data_step = r.number("step", cfg.data_step, positive, "positive");
    cfg.noise_halfwidth = r.number("noise_halfwidth", cfg.noise_halfwidth, nonnegative, "nonnegative");
    r.finish();
  }
  {
    ObjectReader r = root.child("gp");
    cfg.gp_budget = static_cast<int>(r.integer("budget", cfg.gp_budget, 1));
    cfg.kappa_theta = r.number("kappa_theta", cfg.kappa_theta, nonnegative, "nonnegative");
    cfg.theta_ini = r.vector("theta_ini", cfg.theta_ini);
    r.finish();
    if (cfg.theta_ini.size() != cfg.box.lower.size() + 2) throw ConfigError("gp.theta_ini must have n+2 entries");
  }
  {
    ObjectReader r = root.child("check");
    cfg.check_step = r.number("step", cfg.check_step, positive, "positive");
    r.finish();
  }
  {
    ObjectReader r = root.child("control");
    cfg.g = r.matrix("g", cfg.g);
    cfg.R = r.matrix("R", cfg.R);
    r.finish();
    if (cfg.g.rows() != cfg.box.lower.size()) throw ConfigError("control.g must have n rows");
    if (cfg.R.rows() != cfg.g.cols() || cfg.R.cols() != cfg.g.cols()) {
      throw ConfigError("control.R must be m x m with m the column count of control.g");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cfg.R);
    if (!cfg.R.isApprox(cfg.R.transpose()) || llt.info() != Eigen::Success) {
      throw ConfigError("control.R must be symmetric positive definite");
    }
  }
  {
    ObjectReader r = root.child("lqr");
    cfg.kappa_alpha = r.number("kappa_alpha", cfg.kappa_alpha, positive, "positive");
    r.finish();
  }
  {
    ObjectReader r = root.child("synthesis");
    cfg.synthesis.kappa = r.number("kappa", cfg.synthesis.kappa, nonnegative, "nonnegative");
    cfg.synthesis.kappa_grad = r.number("kappa_grad", cfg.synthesis.kappa_grad, positive, "positive");
    cfg.synthesis.iterations = static_cast<int>(r.integer("iterations", cfg.synthesis.iterations, 0));
    {
      ObjectReader e = r.child("eta");
      cfg.synthesis.eta.quadratic = e.number("quadratic", cfg.synthesis.eta.quadratic, nonnegative, "nonnegative");
      cfg.synthesis.eta.constant = e.number("constant", cfg.synthesis.eta.constant, nonnegative, "nonnegative");
      e.finish();
    }
    if (r.has("skip_origin_in_penalty")) {
      const json& v = r.raw("skip_origin_in_penalty");
      if (!v.is_boolean()) throw ConfigError("synthesis.skip_origin_in_penalty must be a boolean");
      cfg.synthesis.skip_origin_in_penalty = v.get<bool>();
    }
    r.finish();
  }
  {
    ObjectReader r = root.child("certify");
    cfg.certify_step = r.number("step", cfg.certify_step, positive, "positive");
    cfg.certify_margin = r.number("margin", cfg.certify_margin, nonnegative, "nonnegative");
    cfg.certify_max_depth = static_cast<int>(r.integer("max_depth", cfg.certify_max_depth, 0));
    r.finish();
  }
  {
    ObjectReader r = root.child("simulation");
    cfg.dt = r.number("dt", cfg.dt, positive, "positive");
    cfg.horizon = r.number("horizon", cfg.horizon, positive, "positive");
    cfg.convergence_radius = r.number("convergence_radius", cfg.convergence_radius, positive, "positive");
    cfg.divergence_radius = r.number("divergence_radius", cfg.divergence_radius, positive, "positive");
    cfg.sim_grid_points = static_cast<int>(r.integer("grid_points", cfg.sim_grid_points, 1));
    r.finish();
    if (cfg.horizon < cfg.dt) throw ConfigError("simulation.horizon must be at least simulation.dt");
  }
  cfg.output_dir = root.string("output_dir", cfg.output_dir);
  cfg.threads = static_cast<unsigned>(root.integer("threads", cfg.threads, 1));
  root.finish();
  return cfg;
}

void apply_override(json& doc, const std::string& dotted_path, const json& value) {
  if (dotted_path.empty()) throw ConfigError("empty override path");
  json* node = &doc;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("malformed override path " + dotted_path);
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path " + dotted_path + " crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override path " + dotted_path + " crosses a non-object");
  (*node)[parts.back()] = value;
}

PlantSpec plant_for(const PipelineConfig& cfg) {
  PlantSpec p = pendulum_plant();
  p.g_true = cfg.g;
  p.dt = cfg.dt;
  p.horizon = cfg.horizon;
  p.convergence_radius = cfg.convergence_radius;
  p.divergence_radius = cfg.divergence_radius;
  return p;
}

std::vector<Point> data_inputs(const PipelineConfig& cfg) {
  return grid_points(cfg.box, grid_counts_for_step(cfg.box, cfg.data_step));
}

std::vector<Point> check_states(const PipelineConfig& cfg) {
  return grid_points(cfg.box, grid_counts_for_step(cfg.box, cfg.check_step));
}

std::vector<Point> simulation_starts(const PipelineConfig& cfg) {
  return grid_points(cfg.box, std::vector<long>(static_cast<std::size_t>(cfg.box.dimension()), cfg.sim_grid_points));
}

TrainingSet generate_data(const PipelineConfig& cfg) {
  return sample_training_set(plant_for(cfg).f_true, data_inputs(cfg), cfg.noise_halfwidth, cfg.seed);
}

HyperparamFit fit_hyperparameters(const PipelineConfig& cfg, const TrainingSet& ts) {
  return optimize_hyperparams(ts, Hyperparams{cfg.theta_ini}, cfg.gp_budget, cfg.kappa_theta);
}

CostSpec cost_for(const PipelineConfig& cfg) { return CostSpec::squared_norm(cfg.box.dimension(), cfg.R); }

ClosedLoopModel base_model(const PipelineConfig& cfg, const GpMean& gp) {
  ClosedLoopModel m{gp, cfg.g, ValueFunctionParams::make(gp.kernels(), Eigen::VectorXd::Zero(gp.kernels().size())),
                    cost_for(cfg)};
  return m;
}

Triangulation certify_triangulation(const PipelineConfig& cfg) { return triangulate_box(cfg.box, cfg.certify_step); }

json controller_to_json(const ValueFunctionParams& vp, const json& metadata) {
  return {{"alpha", vector_to_json(vp.alpha)},
          {"offset", vp.offset},
          {"kernels",
           {{"centers", matrix_to_json(vp.kernels.centers())},
            {"amplitude", vp.kernels.amplitude()},
            {"inv_lengthscale", vector_to_json(vp.kernels.inv_lengthscale())}}},
          {"metadata", metadata}};
}

ValueFunctionParams controller_from_json(const json& doc) {
  try {
    const json& k = doc.at("kernels");
    KernelSet ks(matrix_from_json(k.at("centers")), k.at("amplitude").get<double>(),
                 vector_from_json(k.at("inv_lengthscale")));
    return ValueFunctionParams::make(std::move(ks), vector_from_json(doc.at("alpha")));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed controller file: ") + e.what());
  }
}

json certificate_summary(const StabilityCertificate& cert) {
  return {{"simplex_count", cert.verdicts.size()},
          {"certified_count", cert.certified_count},
          {"certified_fraction", cert.certified_fraction},
          {"origin_count", cert.origin_count},
          {"origin_bucket_count", cert.bucket_count},
          {"origin_bucket_reaches_boundary", cert.bucket_reaches_boundary},
          {"region_count", cert.region_count},
          {"level", std::isfinite(cert.level) ? json(cert.level) : json(nullptr)},
          {"eps_value_lower", cert.eps_value_lower},
          {"max_abs_hdot_upper", cert.max_abs_hdot_upper},
          {"controller_hash", cert.controller_hash},
          {"box", {{"lower", vector_to_json(cert.box.lower)}, {"upper", vector_to_json(cert.box.upper)}}},
          {"grid_step", vector_to_json(cert.grid_step)}};
}

void write_certificate_csv(const fs::path& path, const StabilityCertificate& cert, const Triangulation& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const Eigen::Index n = t.dimension();
  os << "id";
  for (Eigen::Index d = 0; d < n; ++d) os << ",c_" << d + 1;
  os << ",V_lower,Hdot_upper,certified,contains_origin,origin_bucket,in_region\n";
  for (std::size_t id = 0; id < cert.verdicts.size(); ++id) {
    const auto nodes = t.vertex_nodes(id);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (const auto& node : nodes) c += t.node_point(node);
    c /= static_cast<double>(nodes.size());
    const SimplexVerdict& v = cert.verdicts[id];
    os << id;
    for (Eigen::Index d = 0; d < n; ++d) os << ',' << format_double(c[d]);
    os << ',' << format_double(v.V_lower) << ',' << format_double(v.Hdot_upper) << ',' << int(v.certified) << ','
       << int(v.contains_origin) << ',' << int(cert.origin_bucket[id]) << ',' << int(cert.in_region[id]) << '\n';
  }
}

std::vector<Point> region_starts(const StabilityCertificate& cert, const Triangulation& t,
                                 const ValueFunctionParams& vp, const std::vector<Point>& grid) {
  std::vector<Point> candidates;
  for (std::size_t id = 0; id < cert.verdicts.size(); ++id) {
    if (!cert.in_region[id]) continue;
    const Point c = t.simplex(id).centroid();
    if (value(vp, c) < cert.level) candidates.push_back(c);
  }
  std::vector<Point> out;
  if (candidates.empty()) return out;
  for (const Point& g : grid) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double d = (candidates[i] - g).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out.push_back(candidates[best]);
  }
  return out;
}

GpMean load_gp(const fs::path& out, const std::string& stage) {
  require(out, stage, "data.csv");
  require(out, stage, "gp_hyperparams.json");
  const TrainingSet ts = training_set_from_table(read_csv(out / "data.csv"));
  const json hp = read_json(out / "gp_hyperparams.json");
  return fit_mean(ts, Hyperparams{vector_from_json(hp.at("theta"))});
}

void run_gen_data(const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_csv(out / "data.csv", training_set_table(generate_data(cfg)));
}

void run_fit_gp(const PipelineConfig& cfg, const fs::path& out) {
  require(out, "fit-gp", "data.csv");
  const TrainingSet ts = training_set_from_table(read_csv(out / "data.csv"));
  const HyperparamFit fit = fit_hyperparameters(cfg, ts);
  const GpMean gp = fit_mean(ts, fit.hp);

  json components = json::array();
  for (const auto& e : gp.as_exprs()) components.push_back(to_json(e));
  write_json(out / "gp.json", {{"components", components}});
  write_json(out / "gp_hyperparams.json",
             {{"theta", vector_to_json(fit.hp.theta)},
              {"sigma_w", vector_to_json(fit.hp.inv_lengthscale().cwiseInverse())},
              {"sigma_f", fit.hp.amplitude()},
              {"sigma_n", fit.hp.noise_std()},
              {"kappa_theta", cfg.kappa_theta},
              {"initial_objective", fit.initial_objective},
              {"final_objective", fit.final_objective},
              {"evaluations", fit.evaluations}});
}

void run_init_lqr(const PipelineConfig& cfg, const fs::path& out) {
  const GpMean gp = load_gp(out, "init-lqr");
  const LqrInit init = init_lqr(gp, cfg.g, cost_for(cfg), check_states(cfg), cfg.kappa_alpha);
  Eigen::EigenSolver<Eigen::MatrixXd> es(init.closed_loop, false);
  json eig = json::array();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    eig.push_back({es.eigenvalues()[i].real(), es.eigenvalues()[i].imag()});
  }
  write_json(out / "controller_init.json",
             controller_to_json(init.value, {{"source", "lqr"},
                                             {"A", matrix_to_json(init.A)},
                                             {"P", matrix_to_json(init.P)},
                                             {"closed_loop_eigenvalues", eig},
                                             {"care_residual", init.care_residual},
                                             {"normal_residual", init.normal_residual},
                                             {"kappa_alpha", cfg.kappa_alpha}}));
}

void run_synthesize(const PipelineConfig& cfg, const fs::path& out) {
  const ClosedLoopModel m = load_model(cfg, out, "synthesize", "controller_init.json");
  const SynthesisResult res = synthesize(m, check_states(cfg), cfg.synthesis);
  CsvTable trace;
  trace.header = {"iteration", "objective", "hjb", "lyapunov"};
  for (const auto& r : res.trace) {
    trace.rows.push_back({double(r.iteration), r.terms.objective, r.terms.hjb, r.terms.lyapunov});
  }
  write_csv(out / "synthesis.csv", trace);
  write_json(out / "controller.json",
             controller_to_json(res.value, {{"source", "synthesis"},
                                            {"iterations", cfg.synthesis.iterations},
                                            {"initial_objective", res.initial_objective},
                                            {"best_objective", res.best_objective},
                                            {"best_iteration", res.best_iteration},
                                            {"trace", "synthesis.csv"}}));
}

void run_certify(const PipelineConfig& cfg, const fs::path& out) {
  const Triangulation t = certify_triangulation(cfg);
  const CertifyOptions opts{cfg.certify_margin, cfg.threads, cfg.certify_max_depth};
  const ClosedLoopModel m = load_model(cfg, out, "certify", "controller.json");
  const StabilityCertificate cert = certify(m, t, opts);
  write_certificate_csv(out / "certificate.csv", cert, t);
  write_json(out / "certificate.json", certificate_summary(cert));
  if (fs::exists(out / "controller_init.json")) {
    const ClosedLoopModel m0 = load_model(cfg, out, "certify", "controller_init.json");
    const StabilityCertificate cert0 = certify(m0, t, opts);
    write_certificate_csv(out / "certificate_init.csv", cert0, t);
    write_json(out / "certificate_init.json", certificate_summary(cert0));
  }
}

void run_simulate(const PipelineConfig& cfg, const fs::path& out) {
  const ClosedLoopModel m = load_model(cfg, out, "simulate", "controller.json");
  const PlantSpec plant = plant_for(cfg);
  const std::vector<Point> grid = simulation_starts(cfg);

  std::vector<Point> starts = grid;
  std::vector<std::string> kinds(grid.size(), "grid");
  if (fs::exists(out / "certificate.csv") && fs::exists(out / "certificate.json")) {
    // Rebuild the region from the stored verdicts.
    const Triangulation t = certify_triangulation(cfg);
    const CsvTable table = read_csv(out / "certificate.csv");
    const json summary = read_json(out / "certificate.json");
    if (table.rows.size() == t.simplex_count() && summary.at("level").is_number()) {
      StabilityCertificate cert;
      cert.verdicts.resize(table.rows.size());
      cert.in_region.resize(table.rows.size());
      const std::size_t n = static_cast<std::size_t>(t.dimension());
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        cert.verdicts[i].V_lower = table.rows[i][1 + n];
        cert.in_region[i] = static_cast<std::uint8_t>(table.rows[i][n + 6]);
      }
      cert.level = summary.at("level").get<double>();
      for (const Point& p : region_starts(cert, t, m.value, grid)) {
        starts.push_back(p);
        kinds.emplace_back("region");
      }
    }
  }

  fs::create_directories(out / "trajectories");
  json runs = json::array();
  std::size_t converged = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    json entry = {{"index", i}, {"kind", kinds[i]}, {"x0", vector_to_json(starts[i])}};
    try {
      const Trajectory tr = simulate(plant, m, starts[i]);
      CsvTable table;
      table.header.push_back("t");
      for (Eigen::Index d = 0; d < m.state_dim(); ++d) table.header.push_back("x_" + std::to_string(d + 1));
      for (Eigen::Index d = 0; d < m.g.cols(); ++d) table.header.push_back("u_" + std::to_string(d + 1));
      table.header.push_back("V");
      for (std::size_t k = 0; k < tr.times.size(); ++k) {
        std::vector<double> row{tr.times[k]};
        for (Eigen::Index d = 0; d < tr.states[k].size(); ++d) row.push_back(tr.states[k][d]);
        for (Eigen::Index d = 0; d < tr.inputs[k].size(); ++d) row.push_back(tr.inputs[k][d]);
        row.push_back(tr.values[k]);
        table.rows.push_back(std::move(row));
      }
      std::ostringstream name;
      name << "traj_" << (i < 10 ? "00" : (i < 100 ? "0" : "")) << i << ".csv";
      write_csv(out / "trajectories" / name.str(), table);
      entry["file"] = "trajectories/" + name.str();
      entry["outcome"] = to_string(tr.outcome);
      entry["final_state"] = vector_to_json(tr.final_state());
      entry["final_time"] = tr.times.back();
      converged += tr.outcome == Outcome::converged ? 1 : 0;
    } catch (const std::exception& e) {
      entry["outcome"] = "error";
      entry["error"] = e.what();
    }
    runs.push_back(std::move(entry));
  }
  write_json(out / "summary.json", {{"runs", runs}, {"converged", converged}, {"total", starts.size()}});
}

void run_pipeline(const PipelineConfig& cfg, const fs::path& out) {
  run_gen_data(cfg, out);
  run_fit_gp(cfg, out);
  run_init_lqr(cfg, out);
  run_synthesize(cfg, out);
  run_certify(cfg, out);
  run_simulate(cfg, out);
}

}  // namespace gpstab
