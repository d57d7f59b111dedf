// gpstab: run the identification / synthesis / certification pipeline from a
// JSON config. Every stage reads and writes plain files in the output dir.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gpstab/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config;
  std::string out;
  long long seed = -1;
  int threads = 0;
  std::vector<std::string> overrides;
};

void emit_error(const std::string& stage, const std::string& message, const json& extra = json::object()) {
  json err = {{"status", "error"}, {"stage", stage}, {"error", message}};
  err.update(extra);
  std::cerr << err.dump() << std::endl;
}

json load_document(const Flags& flags) {
  json doc = json::object();
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) throw gpstab::ConfigError("cannot open config " + flags.config);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw gpstab::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw gpstab::ConfigError("config must be a JSON object");
  }
  for (const auto& item : flags.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw gpstab::ConfigError("override must look like path=value: " + item);
    const std::string path = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;  // bare strings need no quoting
    }
    gpstab::apply_override(doc, path, value);
  }
  if (flags.seed >= 0) doc["seed"] = flags.seed;
  if (flags.threads > 0) doc["threads"] = flags.threads;
  if (!flags.out.empty()) doc["output_dir"] = flags.out;
  return doc;
}

int run(const std::string& stage, const Flags& flags,
        const std::function<void(const gpstab::PipelineConfig&, const fs::path&)>& body) {
  gpstab::PipelineConfig cfg;
  try {
    cfg = gpstab::config_from_json(load_document(flags));
  } catch (const gpstab::ConfigError& e) {
    emit_error(stage, e.what(), {{"kind", "config"}});
    return kExitConfig;
  }
  const fs::path out(cfg.output_dir);
  const auto start = std::chrono::steady_clock::now();
  try {
    body(cfg, out);
  } catch (const gpstab::MissingArtifact& e) {
    emit_error(e.stage(), e.what(), {{"missing", e.missing()}});
    return kExitFailure;
  } catch (const gpstab::ConfigError& e) {
    emit_error(stage, e.what(), {{"kind", "config"}});
    return kExitConfig;
  } catch (const std::exception& e) {
    emit_error(stage, e.what());
    return kExitFailure;
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << json{{"status", "ok"}, {"stage", stage}, {"out", out.string()}, {"seconds", elapsed}}.dump()
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn, control and certify a dynamical system with Gaussian-process models"};
  app.require_subcommand(1);

  Flags flags;
  const std::map<std::string, std::pair<std::string, void (*)(const gpstab::PipelineConfig&, const fs::path&)>>
      stages = {
          {"gen-data", {"Sample noisy derivatives of the plant on the data grid", gpstab::run_gen_data}},
          {"fit-gp", {"Fit GP hyperparameters and the posterior mean", gpstab::run_fit_gp}},
          {"init-lqr", {"LQR-based initial value function", gpstab::run_init_lqr}},
          {"synthesize", {"Minimize the HJB residual under the Lyapunov penalty", gpstab::run_synthesize}},
          {"certify", {"Certify stability on a simplicial grid", gpstab::run_certify}},
          {"simulate", {"Simulate the true plant under the controller", gpstab::run_simulate}},
          {"pipeline", {"Run every stage in order", gpstab::run_pipeline}},
      };

  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("-c,--config", flags.config, "JSON config file (defaults apply when omitted)");
    sub->add_option("-o,--out", flags.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", flags.seed, "Data RNG seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", flags.threads, "Worker threads for certify and simulate")
        ->check(CLI::PositiveNumber);
    sub->add_option("--stage-overrides", flags.overrides, "Dotted-path patches, e.g. synthesis.iterations=2000")
        ->take_all();
  };

  std::string chosen;
  std::function<void(const gpstab::PipelineConfig&, const fs::path&)> body;
  for (const auto& [name, entry] : stages) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    add_common(sub);
    sub->callback([&chosen, &body, name = name, fn = entry.second] {
      chosen = name;
      body = fn;
    });
  }
  CLI::App* show = app.add_subcommand("show-config", "Print the effective config as JSON");
  add_common(show);
  show->callback([&chosen, &body] {
    chosen = "show-config";
    body = [](const gpstab::PipelineConfig& cfg, const fs::path&) {
      std::cout << gpstab::config_to_json(cfg).dump(2) << std::endl;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    emit_error("cli", e.what(), {{"kind", "usage"}});
    return kExitConfig;
  }

  if (chosen == "show-config") {
    try {
      body(gpstab::config_from_json(load_document(flags)), {});
    } catch (const gpstab::ConfigError& e) {
      emit_error(chosen, e.what(), {{"kind", "config"}});
      return kExitConfig;
    }
    return 0;
  }
  return run(chosen, flags, body);
}
