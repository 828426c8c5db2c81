#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdv/dynamics.hpp"
#include "kdv/spectral.hpp"

namespace kdv::experiment {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct CosineMode {
  int k = 1;
  double a = 0.0;  // a cos(kx) + b sin(kx)
  double b = 0.0;
};

/// Initial or target data. Shapes are mean-free; the state in original
/// variables is mu + shape, or explicit samples whose mean must equal mu.
struct DataSpec {
  std::string shape = "cosines";  // zero | cosines | random | sech2 | samples
  std::vector<CosineMode> modes;
  int band = 8;
  double l2_norm = 1.0;  // random: ||u - mu||_0 after scaling
  std::uint64_t seed = 1;
  double amplitude = 1.0;  // sech2
  double center = 3.141592653589793;
  double width = 1.0;
  std::vector<double> samples;
};

struct LawSpec {
  std::string kind = "none";  // none | damping | gramian_rate | time_varying
  double lambda = 1.0;
  double horizon = 1.0;  // integration horizon of L_lambda
  double t_switch = 4.0;
  double delta_switch = 0.05;
  double r0 = 0.5;
  double s = 0.0;
  std::string operator_file;  // optional prebuilt L_lambda
};

struct FitSpec {
  bool enabled = true;
  double s = 0.0;
  std::optional<std::pair<double, double>> window;
  bool after_entry = false;  // time-varying law: fit from the first time rho = 1
};

struct ObservabilitySpec {
  double T = 1.0;
  int band = 16;
};

struct DiagnosticsSpec {
  FitSpec fit;
  bool energy_residual = false;
  bool conservation = true;
  std::optional<ObservabilitySpec> observability;
};

struct SteerSpec {
  std::string mode = "local";  // linear | local | global
  DataSpec target;
  double T = 1.0;
  double tolerance = 1e-6;
  int max_picard = 30;
  double smallness = 0.3;
  double epsilon = 0.1;
  double max_stage_time = 600.0;
  bool allow_regularization = true;
};

struct SweepAxis {
  std::string path;  // dotted path into the config, e.g. "law.lambda"
  std::vector<json> values;
};

struct SweepSpec {
  std::string kind = "simulate";  // simulate | observability
  std::vector<SweepAxis> axes;
};

struct OperatorSpec {
  std::string kind = "l_lambda";  // ggstar | l_lambda | control_gramian
  double param = 1.0;             // lambda or T
  std::string format = "binary";  // binary | json
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name = "run";
  int n_modes = 128;
  double mu = 0.0;
  StepperConfig stepper;
  double profile_center = 3.141592653589793;
  double profile_width = 1.5707963267948966;
  LawSpec law;
  DataSpec initial;
  double horizon = 10.0;
  int sample_every = 100;
  double hs_index = 1.0;
  bool write_csv = true;
  int dump_every = 0;  // 0: no field dump
  DiagnosticsSpec diagnostics;
  std::optional<SteerSpec> steer;
  std::optional<SweepSpec> sweep;
  std::optional<OperatorSpec> operators;
};

/// Parses and validates everything up front; throws ConfigError naming the
/// offending field. Nothing is allocated beyond the config itself.
ExperimentConfig parse_config(const json& j);
/// Fully resolved config (defaults filled in), as embedded in artifacts.
json to_json(const ExperimentConfig& cfg);

/// Mean-free part of the described data on the grid.
Field make_data(const DataSpec& spec, const SpectralGrid& grid, double mu);

/// A named output held in memory until the whole command has succeeded.
struct Artifact {
  std::string name;
  std::string content;
  bool binary = false;
};

struct CommandResult {
  json report;
  std::vector<Artifact> artifacts;
  int exit_code = 0;
};

struct RunContext {
  std::string tool_version = "dev";
  int workers = 1;
  bool verbose = false;
};

CommandResult cmd_simulate(const ExperimentConfig& cfg, const RunContext& ctx);
CommandResult cmd_steer(const ExperimentConfig& cfg, const RunContext& ctx);
/// Cells run concurrently on ctx.workers threads. Failed cells are recorded
/// and the sweep continues; exit code 3 only if every cell failed.
CommandResult cmd_sweep(const json& base, const ExperimentConfig& cfg, const RunContext& ctx);
CommandResult cmd_operators_build(const ExperimentConfig& cfg, const RunContext& ctx);
/// Summary of a stored operator file.
json describe_operator(const std::string& path);
/// Re-runs diagnostics on a stored trajectory CSV (and field dump, if given).
CommandResult cmd_report(const std::string& csv_path, const std::string& dump_path, double s,
                         std::optional<std::pair<double, double>> window, const RunContext& ctx);

/// Writes all artifacts into dir via temporary files and renames, removing
/// the temporaries if any write fails.
void write_artifacts(const std::string& dir, const std::vector<Artifact>& artifacts);

/// Maps library exceptions to CLI exit codes: 2 config, 3 numerical, 4 steering.
int exit_code_for(const std::exception& e);

}  // namespace kdv::experiment
