// kdvctl: command-line driver for the KdV simulator and control toolkit.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kdv/errors.hpp"
#include "kdv/experiment.hpp"

#ifndef KDV_VERSION
#define KDV_VERSION "dev"
#endif

namespace ex = kdv::experiment;

namespace {

ex::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw kdv::ConfigError("cannot open config \"" + path + "\"");
  try {
    return ex::json::parse(in);
  } catch (const ex::json::parse_error& e) {
    throw kdv::ConfigError("config \"" + path + "\" is not valid JSON: " + e.what());
  }
}

void finish(const ex::CommandResult& res, const std::string& out_dir, bool verbose) {
  ex::write_artifacts(out_dir, res.artifacts);
  if (verbose) std::cout << res.report.dump(2) << "\n";
  std::cout << "wrote " << res.artifacts.size() << " artifact(s) to " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudospectral KdV simulation, feedback stabilization and steering"};
  app.set_version_flag("--version", std::string("kdvctl ") + KDV_VERSION);
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool verbose = false;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "Experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "Directory for artifacts")->capture_default_str();
    sub->add_option("--seed", seed, "Overrides initial.seed");
    sub->add_option("--workers", workers, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_flag("--verbose", verbose, "Print progress and the full report");
  };

  auto* simulate = app.add_subcommand("simulate", "Run one closed- or open-loop simulation");
  common(simulate, true);
  auto* steer = app.add_subcommand("steer", "Compute a steering control and replay it");
  common(steer, true);
  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid");
  common(sweep, true);

  auto* operators = app.add_subcommand("operators", "Build or inspect operator matrices");
  operators->require_subcommand(1);
  auto* op_build = operators->add_subcommand("build", "Assemble the operator described by the config");
  common(op_build, true);
  std::string op_input;
  auto* op_dump = operators->add_subcommand("dump", "Print a summary of a stored operator");
  op_dump->add_option("--input", op_input, "Operator file (binary or JSON)")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Re-run diagnostics on a stored trajectory");
  common(report, false);
  std::string traj_path, dump_path;
  double s_index = 0.0;
  std::vector<double> window;
  report->add_option("--trajectory", traj_path, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  report->add_option("--dump", dump_path, "Field dump (adds the energy balance)")->check(CLI::ExistingFile);
  report->add_option("--s", s_index, "Norm index for the fit (0 or the run's h_s index)");
  report->add_option("--window", window, "Fit window t_start t_end")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ex::RunContext ctx{KDV_VERSION, workers, verbose};
  try {
    if (op_dump->parsed()) {
      std::cout << ex::describe_operator(op_input).dump(2) << "\n";
      return 0;
    }
    if (report->parsed()) {
      std::optional<std::pair<double, double>> w;
      if (window.size() == 2) w = std::make_pair(window[0], window[1]);
      const auto res = ex::cmd_report(traj_path, dump_path, s_index, w, ctx);
      finish(res, out_dir, verbose);
      return res.exit_code;
    }

    ex::json raw = load_json(config_path);
    if (seed && raw.is_object()) {
      if (!raw.contains("initial")) raw["initial"] = {{"shape", "random"}};
      raw["initial"]["seed"] = *seed;
    }
    const ex::ExperimentConfig cfg = ex::parse_config(raw);
    ex::CommandResult res;
    if (simulate->parsed()) {
      res = ex::cmd_simulate(cfg, ctx);
    } else if (steer->parsed()) {
      if (!cfg.steer) throw kdv::ConfigError("steer: the config has no steer block");
      res = ex::cmd_steer(cfg, ctx);
    } else if (sweep->parsed()) {
      if (!cfg.sweep) throw kdv::ConfigError("sweep: the config has no sweep block");
      res = ex::cmd_sweep(raw, cfg, ctx);
    } else if (op_build->parsed()) {
      if (!cfg.operators) throw kdv::ConfigError("operators: the config has no operators block");
      res = ex::cmd_operators_build(cfg, ctx);
    }
    finish(res, out_dir, verbose);
    if (res.exit_code != 0) std::cerr << "kdvctl: every sweep cell failed\n";
    return res.exit_code;
  } catch (const std::exception& e) {
    const int code = ex::exit_code_for(e);
    const char* kind = code == 2 ? "config error" : code == 4 ? "steering failure" : "numerical failure";
    std::cerr << "kdvctl: " << kind << ": " << e.what() << "\n";
    return code;
  }
}
