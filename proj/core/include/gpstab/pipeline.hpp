#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpstab/certifier.hpp"
#include "gpstab/controller.hpp"
#include "gpstab/errors.hpp"
#include "gpstab/geometry.hpp"
#include "gpstab/gp_model.hpp"
#include "gpstab/simulator.hpp"

namespace gpstab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A stage found an input file missing.
class MissingArtifact : public Error {
 public:
  MissingArtifact(std::string stage, std::string missing)
      : Error(stage + ": missing " + missing), stage_(std::move(stage)), missing_(std::move(missing)) {}
  const std::string& stage() const { return stage_; }
  const std::string& missing() const { return missing_; }

 private:
  std::string stage_;
  std::string missing_;
};

struct PipelineConfig {
  Box box{Eigen::Vector2d(-6.0, -6.0), Eigen::Vector2d(6.0, 6.0)};
  std::string plant = "pendulum";
  std::uint64_t seed = 42;

  double data_step = 1.5;
  double noise_halfwidth = 0.1;

  int gp_budget = 100;
  double kappa_theta = 3.0;
  Eigen::VectorXd theta_ini;  // empty means (0, ..., 0, ln 0.1)

  double check_step = 0.6;

  Eigen::MatrixXd g = Eigen::Vector2d(0.0, 1.0);
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(1, 1);

  double kappa_alpha = 1e-3;

  SynthesisOptions synthesis;

  double certify_step = 0.05;
  double certify_margin = 0.0;
  // Bisection depth per simplex before giving up on it.
  int certify_max_depth = 10;

  double dt = 0.005;
  double horizon = 20.0;
  double convergence_radius = 0.1;
  double divergence_radius = 50.0;
  int sim_grid_points = 5;

  std::string output_dir = "out";
  unsigned threads = 1;
};

PipelineConfig default_config();
nlohmann::json config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys, wrong types and
// out-of-range values throw ConfigError.
PipelineConfig config_from_json(const nlohmann::json& doc);
// Sets doc[a][b]... for a dotted path "a.b", creating objects as needed.
void apply_override(nlohmann::json& doc, const std::string& dotted_path, const nlohmann::json& value);

// In-memory stage building blocks.
PlantSpec plant_for(const PipelineConfig& cfg);
std::vector<Point> data_inputs(const PipelineConfig& cfg);
std::vector<Point> check_states(const PipelineConfig& cfg);
std::vector<Point> simulation_starts(const PipelineConfig& cfg);
TrainingSet generate_data(const PipelineConfig& cfg);
HyperparamFit fit_hyperparameters(const PipelineConfig& cfg, const TrainingSet& ts);
CostSpec cost_for(const PipelineConfig& cfg);
// Model with α = 0.
ClosedLoopModel base_model(const PipelineConfig& cfg, const GpMean& gp);
Triangulation certify_triangulation(const PipelineConfig& cfg);

// Serialization of stage artifacts.
nlohmann::json controller_to_json(const ValueFunctionParams& vp, const nlohmann::json& metadata);
ValueFunctionParams controller_from_json(const nlohmann::json& doc);
nlohmann::json certificate_summary(const StabilityCertificate& cert);
// Columns id, c_1..c_n (centroid), V_lower, Hdot_upper, certified,
// contains_origin, origin_bucket, in_region.
void write_certificate_csv(const std::filesystem::path& path, const StabilityCertificate& cert,
                           const Triangulation& t);

/// Start states for closed-loop checks inside the certified region: for each
/// grid point, the centroid of the nearest region simplex whose centroid has
/// V̂ below the certificate level. Empty if the region is.
std::vector<Point> region_starts(const StabilityCertificate& cert, const Triangulation& t,
                                 const ValueFunctionParams& vp, const std::vector<Point>& grid);

// File-based stages. Each reads the outputs of earlier stages from `out` and
// throws MissingArtifact when one is absent.
void run_gen_data(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_fit_gp(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_init_lqr(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_synthesize(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_certify(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_simulate(const PipelineConfig& cfg, const std::filesystem::path& out);
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out);

// Loads data.csv and gp_hyperparams.json from `out` and refits the mean.
GpMean load_gp(const std::filesystem::path& out, const std::string& stage);

}  // namespace gpstab
