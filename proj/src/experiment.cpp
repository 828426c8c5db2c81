#include "kdv/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "kdv/control_ops.hpp"
#include "kdv/diagnostics.hpp"
#include "kdv/errors.hpp"
#include "kdv/feedback.hpp"
#include "kdv/steering.hpp"
#include "kdv/trajectory_io.hpp"

namespace kdv::experiment {

namespace {

constexpr double kPi = std::numbers::pi;

// Typed access to one JSON object with the dotted path kept for messages.
// Unknown keys are rejected so that typos do not silently fall back to defaults.
class Reader {
 public:
  Reader(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be an object");
    for (const auto& [key, _] : j_.items()) {
      if (!allowed.count(key)) fail(key, "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? (path_.empty() ? "config" : path_) : sub(key);
    throw ConfigError(where + ": " + what);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "must be finite");
    return x;
  }

  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(key, "must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }

  std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> options) const {
    const std::string v = string(key, fallback);
    for (const char* o : options) {
      if (v == o) return v;
    }
    std::string list;
    for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
    fail(key, "must be one of {" + list + "}, got \"" + v + "\"");
  }

 private:
  const json& j_;
  std::string path_;
};

DataSpec parse_data(const json& j, const std::string& path, int n_modes) {
  Reader r(j, path, {"shape", "modes", "band", "l2_norm", "seed", "amplitude", "center", "width", "samples"});
  DataSpec d;
  d.shape = r.choice("shape", "cosines", {"zero", "cosines", "random", "sech2", "samples"});
  const int kmax = n_modes / 2 - 1;
  if (d.shape == "cosines") {
    if (!r.has("modes") || !r.raw("modes").is_array() || r.raw("modes").empty()) {
      r.fail("modes", "cosines needs a nonempty array of {k, a, b}");
    }
    int i = 0;
    for (const auto& m : r.raw("modes")) {
      Reader mr(m, r.sub("modes") + "[" + std::to_string(i++) + "]", {"k", "a", "b"});
      CosineMode cm{mr.integer("k", 1), mr.number("a", 0.0), mr.number("b", 0.0)};
      if (cm.k < 1 || cm.k > kmax) mr.fail("k", "must lie in [1, N/2 - 1] = [1, " + std::to_string(kmax) + "]");
      d.modes.push_back(cm);
    }
  } else if (d.shape == "random") {
    d.band = r.integer("band", 8);
    if (d.band < 1 || d.band > kmax) r.fail("band", "must lie in [1, N/2 - 1] = [1, " + std::to_string(kmax) + "]");
    d.l2_norm = r.number("l2_norm", 1.0);
    if (!(d.l2_norm >= 0.0)) r.fail("l2_norm", "must be >= 0");
    d.seed = r.unsigned_integer("seed", 1);
  } else if (d.shape == "sech2") {
    d.amplitude = r.number("amplitude", 1.0);
    d.center = r.number("center", kPi);
    d.width = r.number("width", 1.0);
    if (!(d.width > 0.0)) r.fail("width", "must be > 0");
  } else if (d.shape == "samples") {
    if (!r.has("samples") || !r.raw("samples").is_array()) r.fail("samples", "must be an array of numbers");
    for (const auto& v : r.raw("samples")) {
      if (!v.is_number()) r.fail("samples", "must be an array of numbers");
      d.samples.push_back(v.get<double>());
    }
    if (static_cast<int>(d.samples.size()) != n_modes) {
      r.fail("samples", "needs exactly N = " + std::to_string(n_modes) + " values, got " +
                            std::to_string(d.samples.size()));
    }
  }
  return d;
}

json data_to_json(const DataSpec& d) {
  json j{{"shape", d.shape}};
  if (d.shape == "cosines") {
    j["modes"] = json::array();
    for (const auto& m : d.modes) j["modes"].push_back({{"k", m.k}, {"a", m.a}, {"b", m.b}});
  } else if (d.shape == "random") {
    j["band"] = d.band;
    j["l2_norm"] = d.l2_norm;
    j["seed"] = d.seed;
  } else if (d.shape == "sech2") {
    j["amplitude"] = d.amplitude;
    j["center"] = d.center;
    j["width"] = d.width;
  } else if (d.shape == "samples") {
    j["samples"] = d.samples;
  }
  return j;
}

void check_samples_mean(const DataSpec& d, double mu, const std::string& path) {
  if (d.shape != "samples") return;
  double mean = 0.0;
  for (double v : d.samples) mean += v;
  mean /= static_cast<double>(d.samples.size());
  if (std::abs(mean - mu) > 1e-10 * std::max(1.0, std::abs(mu))) {
    std::ostringstream msg;
    msg << path << ".samples: mean " << mean << " differs from physics.mu = " << mu
        << " (every admissible control conserves the mean)";
    throw ConfigError(msg.str());
  }
}

std::optional<std::pair<double, double>> parse_window(const Reader& r, const std::string& key) {
  if (!r.has(key)) return std::nullopt;
  const json& w = r.raw(key);
  if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
    r.fail(key, "must be [t_start, t_end]");
  }
  const double a = w[0].get<double>(), b = w[1].get<double>();
  if (!(a < b) || a < 0.0) r.fail(key, "needs 0 <= t_start < t_end");
  return std::make_pair(a, b);
}

bool even_profile(double center, double width) {
  if (width >= 2.0 * kPi) return true;
  const double c = std::fmod(std::fmod(center, kPi) + kPi, kPi);
  return c < 1e-12 || kPi - c < 1e-12;
}

void set_path(json& j, const std::string& path, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("sweep: malformed axis path \"" + path + "\"");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  Reader r(j, "", {"schema_version", "name", "grid", "physics", "stepper", "profile", "law", "initial", "horizon",
                   "sampling", "output", "diagnostics", "steer", "sweep", "operators"});
  ExperimentConfig c;
  if (!r.has("schema_version")) r.fail("schema_version", "missing (current version is 1)");
  c.schema_version = r.integer("schema_version", kSchemaVersion);
  if (c.schema_version != kSchemaVersion) {
    r.fail("schema_version", "unsupported version " + std::to_string(c.schema_version) + " (expected 1)");
  }
  c.name = r.string("name", "run");

  if (r.has("grid")) {
    Reader g(r.raw("grid"), "grid", {"n"});
    c.n_modes = g.integer("n", 128);
    if (c.n_modes < 8 || c.n_modes % 2 != 0) g.fail("n", "must be even and >= 8");
  }
  if (r.has("physics")) {
    Reader p(r.raw("physics"), "physics", {"mu"});
    c.mu = p.number("mu", 0.0);
  }
  if (r.has("stepper")) {
    Reader s(r.raw("stepper"), "stepper", {"dt", "scheme", "dealias", "nonlinear"});
    c.stepper.dt = s.number("dt", 5e-4);
    if (!(c.stepper.dt > 0.0)) s.fail("dt", "must be > 0");
    const std::string scheme = s.choice("scheme", "exponential_rk4", {"exponential_rk4", "integrating_factor_rk4"});
    c.stepper.scheme = scheme == "exponential_rk4" ? Scheme::ExponentialRK4 : Scheme::IntegratingFactorRK4;
    c.stepper.dealias = s.boolean("dealias", true);
    c.stepper.nonlinear = s.boolean("nonlinear", true);
  }
  if (r.has("profile")) {
    Reader p(r.raw("profile"), "profile", {"center", "width"});
    c.profile_center = p.number("center", kPi);
    c.profile_width = p.number("width", kPi / 2.0);
    if (!(c.profile_width > 0.0 && c.profile_width <= 2.0 * kPi)) p.fail("width", "must lie in (0, 2 pi]");
  }
  if (r.has("law")) {
    Reader l(r.raw("law"), "law",
             {"kind", "lambda", "horizon", "t_switch", "delta_switch", "r0", "s", "operator_file"});
    c.law.kind = l.choice("kind", "none", {"none", "damping", "gramian_rate", "time_varying"});
    c.law.lambda = l.number("lambda", 1.0);
    c.law.horizon = l.number("horizon", 1.0);
    c.law.t_switch = l.number("t_switch", 4.0);
    c.law.delta_switch = l.number("delta_switch", 0.05);
    c.law.r0 = l.number("r0", 0.5);
    c.law.s = l.number("s", 0.0);
    c.law.operator_file = l.string("operator_file", "");
    if (c.law.kind == "gramian_rate" || c.law.kind == "time_varying") {
      if (!(c.law.lambda > 0.0)) l.fail("lambda", "must be > 0");
      if (!(c.law.horizon > 0.0)) l.fail("horizon", "must be > 0");
    }
    if (c.law.kind == "time_varying") {
      if (!(c.law.t_switch > 0.0)) l.fail("t_switch", "must be > 0");
      if (!(c.law.delta_switch > 0.0 && c.law.delta_switch < 0.1)) l.fail("delta_switch", "must lie in (0, 1/10)");
      if (!(c.law.r0 > 0.0 && c.law.r0 < 1.0)) l.fail("r0", "must lie in (0, 1)");
      if (!(c.law.s >= 0.0)) l.fail("s", "must be >= 0");
    }
  }
  if (r.has("initial")) c.initial = parse_data(r.raw("initial"), "initial", c.n_modes);
  check_samples_mean(c.initial, c.mu, "initial");
  c.horizon = r.number("horizon", 10.0);
  if (!(c.horizon > 0.0)) r.fail("horizon", "must be > 0");
  if (r.has("sampling")) {
    Reader s(r.raw("sampling"), "sampling", {"every", "hs_index", "dump_every"});
    c.sample_every = s.integer("every", 100);
    if (c.sample_every < 1) s.fail("every", "must be >= 1");
    c.hs_index = s.number("hs_index", 1.0);
    if (!(c.hs_index >= 0.0)) s.fail("hs_index", "must be >= 0");
    c.dump_every = s.integer("dump_every", 0);
    if (c.dump_every < 0) s.fail("dump_every", "must be >= 0");
    if (c.dump_every > 0 && c.dump_every % c.sample_every != 0) {
      s.fail("dump_every", "must be a multiple of sampling.every");
    }
  }
  if (r.has("output")) {
    Reader o(r.raw("output"), "output", {"csv"});
    c.write_csv = o.boolean("csv", true);
  }
  if (r.has("diagnostics")) {
    Reader d(r.raw("diagnostics"), "diagnostics", {"fit", "energy_residual", "conservation", "observability"});
    if (d.has("fit")) {
      Reader f(d.raw("fit"), "diagnostics.fit", {"enabled", "s", "window", "after_entry"});
      c.diagnostics.fit.enabled = f.boolean("enabled", true);
      c.diagnostics.fit.s = f.number("s", 0.0);
      c.diagnostics.fit.window = parse_window(f, "window");
      c.diagnostics.fit.after_entry = f.boolean("after_entry", false);
      if (c.diagnostics.fit.s != 0.0 && c.diagnostics.fit.s != c.hs_index) {
        f.fail("s", "must be 0 or sampling.hs_index");
      }
      if (c.diagnostics.fit.after_entry && c.law.kind != "time_varying") {
        f.fail("after_entry", "only meaningful for law.kind = time_varying");
      }
      if (c.diagnostics.fit.window && c.diagnostics.fit.window->second > c.horizon + 1e-12) {
        f.fail("window", "ends after the horizon");
      }
    }
    c.diagnostics.energy_residual = d.boolean("energy_residual", false);
    if (c.diagnostics.energy_residual && c.law.kind != "damping") {
      d.fail("energy_residual", "needs law.kind = damping");
    }
    c.diagnostics.conservation = d.boolean("conservation", true);
    if (d.has("observability")) {
      Reader o(d.raw("observability"), "diagnostics.observability", {"T", "band"});
      ObservabilitySpec os{o.number("T", 1.0), o.integer("band", 16)};
      if (!(os.T > 0.0)) o.fail("T", "must be > 0");
      if (os.band < 1 || os.band > c.n_modes / 2 - 1) o.fail("band", "must lie in [1, N/2 - 1]");
      c.diagnostics.observability = os;
    }
  }
  if (r.has("steer")) {
    Reader s(r.raw("steer"), "steer",
             {"mode", "target", "T", "tolerance", "max_picard", "smallness", "epsilon", "max_stage_time",
              "allow_regularization"});
    SteerSpec st;
    st.mode = s.choice("mode", "local", {"linear", "local", "global"});
    if (!s.has("target")) s.fail("target", "missing");
    st.target = parse_data(s.raw("target"), "steer.target", c.n_modes);
    check_samples_mean(st.target, c.mu, "steer.target");
    st.T = s.number("T", 1.0);
    if (!(st.T > 0.0)) s.fail("T", "must be > 0");
    st.tolerance = s.number("tolerance", 1e-6);
    if (!(st.tolerance > 0.0)) s.fail("tolerance", "must be > 0");
    st.max_picard = s.integer("max_picard", 30);
    if (st.max_picard < 0) s.fail("max_picard", "must be >= 0");
    st.smallness = s.number("smallness", 0.3);
    if (!(st.smallness > 0.0)) s.fail("smallness", "must be > 0");
    st.epsilon = s.number("epsilon", 0.1);
    if (!(st.epsilon > 0.0 && st.epsilon <= st.smallness)) s.fail("epsilon", "must lie in (0, smallness]");
    st.max_stage_time = s.number("max_stage_time", 600.0);
    if (!(st.max_stage_time > 0.0)) s.fail("max_stage_time", "must be > 0");
    st.allow_regularization = s.boolean("allow_regularization", true);
    if (st.mode == "global" && !even_profile(c.profile_center, c.profile_width)) {
      throw ConfigError(
          "profile: global steering needs an even profile g(-x) = g(x); use center 0 or pi (or width 2 pi)");
    }
    c.steer = st;
  }
  if (r.has("sweep")) {
    Reader s(r.raw("sweep"), "sweep", {"kind", "axes"});
    SweepSpec sw;
    sw.kind = s.choice("kind", "simulate", {"simulate", "observability"});
    if (!s.has("axes") || !s.raw("axes").is_object() || s.raw("axes").empty()) {
      s.fail("axes", "must map config paths to nonempty value lists, e.g. {\"law.lambda\": [0.5, 1, 2]}");
    }
    for (const auto& [path, values] : s.raw("axes").items()) {
      if (!values.is_array() || values.empty()) s.fail("axes." + path, "must be a nonempty array");
      if (path.rfind("sweep", 0) == 0) s.fail("axes." + path, "cannot sweep the sweep block");
      sw.axes.push_back({path, std::vector<json>(values.begin(), values.end())});
    }
    if (sw.kind == "observability" && !c.diagnostics.observability) {
      s.fail("kind", "observability sweeps need diagnostics.observability");
    }
    c.sweep = sw;
  }
  if (r.has("operators")) {
    Reader o(r.raw("operators"), "operators", {"kind", "param", "format"});
    OperatorSpec os;
    os.kind = o.choice("kind", "l_lambda", {"ggstar", "l_lambda", "control_gramian"});
    os.param = o.number("param", os.kind == "ggstar" ? 0.0 : 1.0);
    if (os.kind == "l_lambda" && !(os.param >= 0.0)) o.fail("param", "lambda must be >= 0");
    if (os.kind == "control_gramian" && !(os.param > 0.0)) o.fail("param", "T must be > 0");
    os.format = o.choice("format", "binary", {"binary", "json"});
    c.operators = os;
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["grid"] = {{"n", c.n_modes}};
  j["physics"] = {{"mu", c.mu}};
  j["stepper"] = {{"dt", c.stepper.dt},
                  {"scheme", c.stepper.scheme == Scheme::ExponentialRK4 ? "exponential_rk4" : "integrating_factor_rk4"},
                  {"dealias", c.stepper.dealias},
                  {"nonlinear", c.stepper.nonlinear}};
  j["profile"] = {{"center", c.profile_center}, {"width", c.profile_width}};
  j["law"] = {{"kind", c.law.kind}};
  if (c.law.kind == "gramian_rate" || c.law.kind == "time_varying") {
    j["law"]["lambda"] = c.law.lambda;
    j["law"]["horizon"] = c.law.horizon;
    if (!c.law.operator_file.empty()) j["law"]["operator_file"] = c.law.operator_file;
  }
  if (c.law.kind == "time_varying") {
    j["law"]["t_switch"] = c.law.t_switch;
    j["law"]["delta_switch"] = c.law.delta_switch;
    j["law"]["r0"] = c.law.r0;
    j["law"]["s"] = c.law.s;
  }
  j["initial"] = data_to_json(c.initial);
  j["horizon"] = c.horizon;
  j["sampling"] = {{"every", c.sample_every}, {"hs_index", c.hs_index}, {"dump_every", c.dump_every}};
  j["output"] = {{"csv", c.write_csv}};
  json fit{{"enabled", c.diagnostics.fit.enabled}, {"s", c.diagnostics.fit.s}};
  if (c.diagnostics.fit.window) fit["window"] = {c.diagnostics.fit.window->first, c.diagnostics.fit.window->second};
  if (c.diagnostics.fit.after_entry) fit["after_entry"] = true;
  j["diagnostics"] = {{"fit", fit},
                      {"energy_residual", c.diagnostics.energy_residual},
                      {"conservation", c.diagnostics.conservation}};
  if (c.diagnostics.observability) {
    j["diagnostics"]["observability"] = {{"T", c.diagnostics.observability->T},
                                         {"band", c.diagnostics.observability->band}};
  }
  if (c.steer) {
    const auto& s = *c.steer;
    j["steer"] = {{"mode", s.mode},
                  {"target", data_to_json(s.target)},
                  {"T", s.T},
                  {"tolerance", s.tolerance},
                  {"max_picard", s.max_picard},
                  {"smallness", s.smallness},
                  {"epsilon", s.epsilon},
                  {"max_stage_time", s.max_stage_time},
                  {"allow_regularization", s.allow_regularization}};
  }
  if (c.sweep) {
    json axes = json::object();
    for (const auto& a : c.sweep->axes) axes[a.path] = a.values;
    j["sweep"] = {{"kind", c.sweep->kind}, {"axes", axes}};
  }
  if (c.operators) {
    j["operators"] = {{"kind", c.operators->kind}, {"param", c.operators->param}, {"format", c.operators->format}};
  }
  return j;
}

Field make_data(const DataSpec& d, const SpectralGrid& grid, double mu) {
  std::vector<cplx> c(grid.half_size(), 0.0);
  if (d.shape == "zero") return Field(grid);
  if (d.shape == "cosines") {
    // a cos kx + b sin kx = (a - i b)/2 e^{ikx} + c.c.
    for (const auto& m : d.modes) c[m.k] += cplx(0.5 * m.a, -0.5 * m.b);
    return Field(grid, std::move(c));
  }
  if (d.shape == "random") {
    std::mt19937_64 rng(d.seed);
    std::normal_distribution<double> normal;
    for (int k = 1; k <= d.band; ++k) {
      const double re = normal(rng);
      const double im = normal(rng);
      c[k] = cplx(re, im);
    }
    const Field f(grid, std::move(c));
    const double n = l2_norm(f);
    return n == 0.0 ? f : f * (d.l2_norm / n);
  }
  std::vector<double> x(grid.size());
  if (d.shape == "sech2") {
    for (int j = 0; j < grid.size(); ++j) {
      // Periodic distance to the center keeps the profile continuous.
      double off = std::remainder(grid.point(j) - d.center, 2.0 * kPi);
      const double s = 1.0 / std::cosh(off / d.width);
      x[j] = d.amplitude * s * s;
    }
    return mean_project(Field::from_physical(x, grid));
  }
  // samples: original variables, mean already checked against mu.
  return mean_project(Field::from_physical(d.samples, grid) - Field::constant(mu, grid));
}

namespace {

std::string provenance_line(const ExperimentConfig& c, const RunContext& ctx, const std::string& command) {
  return "kdvctl " + ctx.tool_version + " " + command + " config=" + to_json(c).dump();
}

json provenance(const ExperimentConfig& c, const RunContext& ctx, const std::string& command) {
  return {{"tool", "kdvctl"}, {"version", ctx.tool_version}, {"command", command}, {"config", to_json(c)}};
}

struct Setup {
  SpectralGrid grid;
  LinearSymbol symbol;
  ControlProfile profile;
};

Setup make_setup(const ExperimentConfig& c) {
  SpectralGrid grid(c.n_modes);
  ControlProfile profile = ControlProfile::bump(c.profile_center, c.profile_width, grid);
  return {grid, LinearSymbol(c.mu), std::move(profile)};
}

std::shared_ptr<const OperatorMatrix> l_lambda_for(const ExperimentConfig& c, const Setup& s) {
  if (!c.law.operator_file.empty()) {
    std::ifstream in(c.law.operator_file, std::ios::binary);
    if (!in) throw ConfigError("law.operator_file: cannot open \"" + c.law.operator_file + "\"");
    auto op = std::make_shared<const OperatorMatrix>(read_operator(in));
    auto mismatch = [&](const std::string& what) {
      throw ConfigError("law.operator_file: stored operator " + what + " does not match the config");
    };
    if (op->kind() != OperatorKind::LLambda) mismatch("kind");
    if (op->n_modes() != c.n_modes) mismatch("grid size");
    if (std::abs(op->mu() - c.mu) > 1e-12) mismatch("mu");
    if (std::abs(op->param() - c.law.lambda) > 1e-12) mismatch("lambda");
    if (std::abs(op->horizon() - c.law.horizon) > 1e-12) mismatch("horizon");
    return op;
  }
  return std::make_shared<const OperatorMatrix>(build_L_lambda(s.profile, c.law.lambda, s.symbol, c.law.horizon));
}

FeedbackLaw make_law(const ExperimentConfig& c, const Setup& s) {
  if (c.law.kind == "none") return FeedbackLaw::none(s.profile);
  if (c.law.kind == "damping") return FeedbackLaw::damping(s.profile);
  auto L = l_lambda_for(c, s);
  if (c.law.kind == "gramian_rate") return FeedbackLaw::gramian_rate(s.profile, L);
  return FeedbackLaw::time_varying(s.profile, L, c.law.t_switch, c.law.delta_switch, c.law.r0, c.law.s);
}

json fit_json(const DecayFit& f) {
  return {{"rate", f.rate},       {"intercept", f.intercept}, {"window", {f.t_start, f.t_end}},
          {"residual", f.residual}, {"norm_index", f.norm_index}, {"samples", f.samples},
          {"truncated", f.truncated}};
}

// Same record with [u] reported in original variables.
TrajectoryRecord with_mean(TrajectoryRecord rec, double mu) {
  for (auto& smp : rec.samples) smp.mass += mu;
  return rec;
}

std::string csv_text(const TrajectoryRecord& rec, const std::vector<std::string>& prov) {
  std::ostringstream out;
  write_trajectory_csv(out, rec, prov);
  return out.str();
}

std::string dump_text(const FieldDump& d) {
  std::ostringstream out;
  write_field_dump(out, d);
  return out.str();
}

// Shift the physical samples of a dump back to original variables.
FieldDump shifted_dump(FieldDump d, double mu) {
  for (auto& smp : d.samples) {
    for (auto& v : smp.values) v += mu;
  }
  return d;
}

struct SimulationOutcome {
  TrajectoryRecord record;
  json report;
};

SimulationOutcome run_simulation(const ExperimentConfig& c, const RunContext& ctx) {
  const Setup s = make_setup(c);
  const FeedbackLaw law = make_law(c, s);
  const Field u0 = make_data(c.initial, s.grid, c.mu);

  SimulateOptions opts;
  opts.sample_every = c.sample_every;
  opts.hs_index = c.hs_index;
  opts.store_fields = c.dump_every > 0;
  std::optional<double> entry;
  const auto* tv = std::get_if<TimeVarying>(&law.variant());
  if (tv) {
    const double s_idx = tv->s, r0 = tv->r0;
    auto check = [&entry, s_idx, r0](double t, const Field& u) {
      if (!entry && std::pow(hs_norm(mean_project(u), s_idx), 2) <= r0) entry = t;
    };
    check(0.0, u0);
    opts.on_step = check;
  }
  if (ctx.verbose) std::clog << "simulate: N = " << c.n_modes << ", horizon " << c.horizon << ", law " << law.name() << "\n";
  TrajectoryRecord rec = simulate(u0, c.horizon, c.stepper, s.symbol, law, opts);

  json rep;
  rep["law"] = law.name();
  rep["final"] = {{"t", rec.samples.back().t}, {"l2", rec.samples.back().l2}, {"h_s", rec.samples.back().hs}};
  rep["initial_l2"] = std::sqrt(rec.initial_l2_sq);
  rep["max_step_increase"] = rec.max_step_increase;
  if (tv) rep["rho_entry_time"] = entry ? json(*entry) : json(nullptr);
  const auto& fs = c.diagnostics.fit;
  if (fs.enabled) {
    try {
      DecayFit f;
      if (fs.after_entry) {
        if (!entry) throw UsageError("fit_decay: trajectory never entered the rho = 1 region");
        f = fit_decay(rec, fs.s, *entry, fs.window ? fs.window->second : c.horizon);
      } else if (fs.window) {
        f = fit_decay(rec, fs.s, fs.window->first, fs.window->second);
      } else {
        f = fit_decay(rec, fs.s);
      }
      rep["fit"] = fit_json(f);
    } catch (const UsageError& e) {
      rep["fit"] = {{"error", e.what()}};
    }
  }
  if (c.diagnostics.energy_residual) rep["energy_residual"] = energy_residual(rec);
  if (c.diagnostics.conservation) {
    rep["conservation"] = {{"mass_drift", mass_drift(rec)}};
    // I2 is only an invariant of the unforced flow.
    if (c.law.kind == "none") rep["conservation"]["energy_drift"] = energy_drift(rec);
  }
  if (c.diagnostics.observability) {
    const auto& o = *c.diagnostics.observability;
    const OperatorMatrix gram = build_control_gramian(s.profile, o.T, s.symbol);
    rep["observability"] = {{"T", o.T}, {"band", o.band}, {"delta", observability_constant(gram, o.band)}};
  }
  return {std::move(rec), std::move(rep)};
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& c, const RunContext& ctx) {
  auto [rec, rep] = run_simulation(c, ctx);
  CommandResult out;
  out.report = provenance(c, ctx, "simulate");
  out.report.update(rep);
  const std::vector<std::string> prov{provenance_line(c, ctx, "simulate")};
  if (c.write_csv) out.artifacts.push_back({"trajectory.csv", csv_text(with_mean(rec, c.mu), prov)});
  if (c.dump_every > 0) {
    FieldDump d = make_field_dump(rec, c.mu, to_json(c).dump());
    const std::size_t stride = static_cast<std::size_t>(c.dump_every / c.sample_every);
    FieldDump thin = d;
    thin.samples.clear();
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      if (i % stride == 0 || i + 1 == d.samples.size()) thin.samples.push_back(d.samples[i]);
    }
    out.artifacts.push_back({"fields.json", dump_text(shifted_dump(std::move(thin), c.mu))});
  }
  out.artifacts.push_back({"report.json", out.report.dump(2) + "\n"});
  return out;
}

CommandResult cmd_steer(const ExperimentConfig& c, const RunContext& ctx) {
  if (!c.steer) throw ConfigError("steer: block missing");
  const SteerSpec& st = *c.steer;
  const Setup s = make_setup(c);
  const Field u0 = make_data(c.initial, s.grid, c.mu);
  const Field u1 = make_data(st.target, s.grid, c.mu);

  json rep;
  rep["mode"] = st.mode;
  std::optional<ControlSignal> control;
  StepperConfig replay_cfg = c.stepper;

  if (st.mode == "linear") {
    replay_cfg.nonlinear = false;
    const OperatorMatrix gram = build_control_gramian(s.profile, st.T, s.symbol);
    SteeringMachinery m{replay_cfg, s.symbol, nullptr, nullptr};
    const auto hum = hum_linear(u0, u1, st.T, gram, s.profile, s.symbol, m.sample_spacing(st.T), st.allow_regularization);
    rep["regularization"] = hum.regularization;
    rep["bias_bound"] = hum.bias_bound;
    rep["gramian_condition"] = gram.condition();
    control = hum.control;
  } else {
    SteeringProblem pb{u0, u1, st.T, c.mu, st.tolerance, st.max_picard};
    SteeringMachinery m = SteeringMachinery::make(c.stepper, s.symbol, s.profile, st.T);
    m.smallness = st.smallness;
    m.allow_regularization = st.allow_regularization;
    if (st.mode == "local") {
      if (ctx.verbose) std::clog << "steer: local Picard correction\n";
      const auto loc = steer_local(pb, m);
      rep["picard_iterations"] = loc.iterations;
      rep["residuals"] = loc.residuals;
      control = loc.control;
    } else {
      if (ctx.verbose) std::clog << "steer: global pipeline (damp, connect, reversed damp)\n";
      const auto glob = steer_global(pb, m, GlobalOptions{st.epsilon, st.max_stage_time});
      const auto& r = glob.report;
      rep["stages"] = {{"stabilize_start", r.t_stabilize_start},
                       {"connect", r.t_connect},
                       {"stabilize_target_reversed", r.t_stabilize_target},
                       {"total_time", r.total_time()},
                       {"picard_iterations", r.picard_iterations},
                       {"local_residual", r.local_residual}};
      control = glob.control;
    }
  }

  SimulateOptions opts;
  opts.sample_every = c.sample_every;
  opts.hs_index = c.hs_index;
  opts.store_fields = c.dump_every > 0;
  TrajectoryRecord rec = replay(u0, *control, replay_cfg, s.symbol, s.profile, opts);
  const double err = l2_norm(*rec.final_state - u1);
  rep["duration"] = control->duration();
  rep["replay_error"] = err;
  if (st.mode == "linear") {
    const double scale = l2_norm(u1 - w_propagate(u0, st.T, s.symbol));
    rep["replay_error_relative"] = scale > 0.0 ? json(err / scale) : json(nullptr);
  }
  rep["mass_drift"] = mass_drift(rec);
  rep["control_l2_time_norm"] = control->l2_time_norm();
  rep["control_max_norm"] = control->max_norm();

  CommandResult out;
  out.report = provenance(c, ctx, "steer");
  out.report.update(rep);
  const std::string cfg_json = to_json(c).dump();
  // Long global controls hold ~1e6 samples; the dump keeps one per dump_every steps.
  const std::size_t control_stride = c.dump_every > 0 ? static_cast<std::size_t>(c.dump_every) : 1;
  out.report["control_dump_stride"] = control_stride;
  out.artifacts.push_back({"control.json", dump_text(control->to_dump(c.mu, cfg_json, control_stride))});
  const std::vector<std::string> prov{provenance_line(c, ctx, "steer")};
  if (c.write_csv) out.artifacts.push_back({"replay.csv", csv_text(with_mean(rec, c.mu), prov)});
  if (c.dump_every > 0) {
    FieldDump d = make_field_dump(rec, c.mu, cfg_json);
    const std::size_t stride = static_cast<std::size_t>(c.dump_every / c.sample_every);
    FieldDump thin = d;
    thin.samples.clear();
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      if (i % stride == 0 || i + 1 == d.samples.size()) thin.samples.push_back(d.samples[i]);
    }
    out.artifacts.push_back({"replay_fields.json", dump_text(shifted_dump(std::move(thin), c.mu))});
  }
  out.artifacts.push_back({"report.json", out.report.dump(2) + "\n"});
  return out;
}

CommandResult cmd_sweep(const json& base, const ExperimentConfig& c, const RunContext& ctx) {
  if (!c.sweep) throw ConfigError("sweep: block missing");
  const SweepSpec& sw = *c.sweep;

  // Cross product, last axis fastest.
  std::vector<std::vector<std::size_t>> cells{{}};
  for (const auto& axis : sw.axes) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& prefix : cells) {
      for (std::size_t i = 0; i < axis.values.size(); ++i) {
        auto v = prefix;
        v.push_back(i);
        next.push_back(std::move(v));
      }
    }
    cells = std::move(next);
  }

  // Resolve every cell before running any of them.
  json cell_base = base;
  cell_base.erase("sweep");
  std::vector<json> params(cells.size());
  std::vector<std::optional<ExperimentConfig>> configs(cells.size());
  std::vector<std::string> errors(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json j = cell_base;
    params[i] = json::object();
    for (std::size_t a = 0; a < sw.axes.size(); ++a) {
      set_path(j, sw.axes[a].path, sw.axes[a].values[cells[i][a]]);
      params[i][sw.axes[a].path] = sw.axes[a].values[cells[i][a]];
    }
    try {
      configs[i] = parse_config(j);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }

  std::vector<json> rows(cells.size());
  std::vector<std::vector<Artifact>> cell_artifacts(cells.size());
  const int n = static_cast<int>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, ctx.workers))
  for (int i = 0; i < n; ++i) {
    json row{{"cell", i}, {"params", params[i]}};
    if (!configs[i]) {
      row["status"] = "failed";
      row["error"] = errors[i];
      rows[i] = std::move(row);
      continue;
    }
    try {
      const ExperimentConfig& cc = *configs[i];
      if (sw.kind == "observability") {
        const Setup s = make_setup(cc);
        const auto& o = *cc.diagnostics.observability;
        const OperatorMatrix gram = build_control_gramian(s.profile, o.T, s.symbol);
        row["observability"] = {{"T", o.T}, {"band", o.band}, {"delta", observability_constant(gram, o.band)}};
        row["gramian_condition"] = gram.condition();
      } else {
        RunContext quiet = ctx;
        quiet.verbose = false;
        auto [rec, rep] = run_simulation(cc, quiet);
        row.update(rep);
        if (cc.write_csv) {
          cell_artifacts[i].push_back({"cell_" + std::to_string(i) + "/trajectory.csv",
                                       csv_text(with_mean(rec, cc.mu), {provenance_line(cc, ctx, "sweep-cell")})});
        }
      }
      row["status"] = "ok";
    } catch (const std::exception& e) {
      row["status"] = "failed";
      row["error"] = e.what();
    }
    rows[i] = std::move(row);
  }

  int failed = 0;
  for (const auto& r : rows) failed += r["status"] == "failed";

  // Monotonicity along a single axis, recorded rather than asserted.
  json trends = json::object();
  if (sw.axes.size() == 1 && failed == 0) {
    auto metric = [&](const json& r) -> std::optional<double> {
      if (sw.kind == "observability") return r["observability"]["delta"].get<double>();
      if (r.contains("fit") && r["fit"].contains("rate")) return r["fit"]["rate"].get<double>();
      return std::nullopt;
    };
    bool increasing = true, decreasing = true, complete = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto a = metric(rows[i - 1]), b = metric(rows[i]);
      if (!a || !b) {
        complete = false;
        break;
      }
      increasing = increasing && *b >= *a;
      decreasing = decreasing && *b <= *a;
    }
    if (complete) {
      trends[sw.kind == "observability" ? "delta" : "rate"] = {{"weakly_increasing", increasing},
                                                               {"weakly_decreasing", decreasing}};
    }
  }

  CommandResult out;
  out.report = provenance(c, ctx, "sweep");
  out.report["cells"] = rows;
  out.report["failed_cells"] = failed;
  out.report["trends"] = trends;
  std::ostringstream table;
  table << "# " << provenance_line(c, ctx, "sweep") << "\n";
  table << "cell";
  for (const auto& a : sw.axes) table << "," << a.path;
  table << ",status,rate,fit_residual,energy_residual,mass_drift,delta\n";
  for (const auto& r : rows) {
    table << r["cell"].get<int>();
    for (const auto& a : sw.axes) table << "," << r["params"][a.path].dump();
    table << "," << r["status"].get<std::string>();
    auto num = [&](const json& v) { return v.is_number() ? format_double(v.get<double>()) : std::string(); };
    const bool has_fit = r.contains("fit") && r["fit"].contains("rate");
    table << "," << (has_fit ? num(r["fit"]["rate"]) : "") << "," << (has_fit ? num(r["fit"]["residual"]) : "");
    table << "," << (r.contains("energy_residual") ? num(r["energy_residual"]) : "");
    table << "," << (r.contains("conservation") ? num(r["conservation"]["mass_drift"]) : "");
    table << "," << (r.contains("observability") ? num(r["observability"]["delta"]) : "") << "\n";
  }
  out.artifacts.push_back({"sweep_summary.csv", table.str()});
  for (auto& a : cell_artifacts) {
    for (auto& art : a) out.artifacts.push_back(std::move(art));
  }
  out.artifacts.push_back({"report.json", out.report.dump(2) + "\n"});
  out.exit_code = (failed == n && n > 0) ? 3 : 0;
  return out;
}

CommandResult cmd_operators_build(const ExperimentConfig& c, const RunContext& ctx) {
  if (!c.operators) throw ConfigError("operators: block missing");
  const auto& os = *c.operators;
  const Setup s = make_setup(c);
  OperatorMatrix op = os.kind == "ggstar"     ? build_ggstar(s.profile)
                      : os.kind == "l_lambda" ? build_L_lambda(s.profile, os.param, s.symbol, c.law.horizon)
                                              : build_control_gramian(s.profile, os.param, s.symbol);
  std::ostringstream data;
  if (os.format == "json") {
    write_operator_json(data, op);
  } else {
    write_operator_binary(data, op);
  }
  CommandResult out;
  out.report = provenance(c, ctx, "operators build");
  out.report["operator"] = {{"kind", to_string(op.kind())},
                            {"n_modes", op.n_modes()},
                            {"mu", op.mu()},
                            {"param", op.param()},
                            {"horizon", op.horizon()},
                            {"min_eigenvalue", op.min_eigenvalue()},
                            {"max_eigenvalue", op.max_eigenvalue()},
                            {"positive_definite", op.positive_definite()}};
  out.artifacts.push_back({os.format == "json" ? "operator.json" : "operator.bin", data.str(), os.format != "json"});
  out.artifacts.push_back({"report.json", out.report.dump(2) + "\n"});
  return out;
}

json describe_operator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open operator file \"" + path + "\"");
  const OperatorMatrix op = read_operator(in);
  json j{{"file", path},
         {"kind", to_string(op.kind())},
         {"n_modes", op.n_modes()},
         {"mu", op.mu()},
         {"param", op.param()},
         {"horizon", op.horizon()},
         {"dimension", op.entries().rows()},
         {"min_eigenvalue", op.min_eigenvalue()},
         {"max_eigenvalue", op.max_eigenvalue()},
         {"positive_definite", op.positive_definite()}};
  if (op.positive_definite()) j["condition"] = op.condition();
  return j;
}

CommandResult cmd_report(const std::string& csv_path, const std::string& dump_path, double s,
                         std::optional<std::pair<double, double>> window, const RunContext& ctx) {
  std::ifstream in(csv_path);
  if (!in) throw UsageError("cannot open trajectory \"" + csv_path + "\"");
  TrajectoryRecord rec = read_trajectory_csv(in);
  if (rec.samples.empty()) throw UsageError("trajectory \"" + csv_path + "\" has no samples");
  // The CSV carries the norms of u - [u], so fits are unaffected by the mean.
  json rep{{"tool", "kdvctl"}, {"version", ctx.tool_version}, {"command", "report"}, {"trajectory", csv_path}};
  std::ifstream again(csv_path);
  std::string line;
  std::vector<std::string> prov;
  while (std::getline(again, line) && !line.empty() && line[0] == '#') prov.push_back(line.substr(1));
  rep["provenance"] = prov;

  const DecayFit f = window ? fit_decay(rec, s, window->first, window->second) : fit_decay(rec, s);
  rep["fit"] = fit_json(f);
  rep["mass_drift"] = mass_drift(rec);
  double max_inc = 0.0;
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    max_inc = std::max(max_inc, rec.samples[i].l2 - rec.samples[i - 1].l2);
  }
  rep["max_sample_increase"] = max_inc;
  if (!dump_path.empty()) {
    std::ifstream din(dump_path);
    if (!din) throw UsageError("cannot open field dump \"" + dump_path + "\"");
    const FieldDump d = read_field_dump(din);
    rep["dump"] = {{"file", dump_path}, {"quantity", d.quantity}, {"samples", d.samples.size()}};
    // The dump carries the work integral, which the CSV does not.
    if (d.quantity == "u" && !d.samples.empty()) {
      const SpectralGrid grid(d.n_modes);
      const double e0 = std::pow(l2_norm(mean_project(Field::from_physical(d.samples.front().values, grid))), 2);
      double worst = 0.0;
      for (const auto& smp : d.samples) {
        const double e = std::pow(l2_norm(mean_project(Field::from_physical(smp.values, grid))), 2);
        worst = std::max(worst, std::abs(e - e0 - smp.work));
      }
      rep["energy_balance_residual"] = e0 > 0.0 ? worst / e0 : worst;
    }
  }
  CommandResult out;
  out.report = rep;
  out.artifacts.push_back({"report.json", rep.dump(2) + "\n"});
  return out;
}

void write_artifacts(const std::string& dir, const std::vector<Artifact>& artifacts) {
  namespace fs = std::filesystem;
  std::vector<fs::path> temps;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& t : temps) fs::remove(t, ec);
  };
  try {
    fs::create_directories(dir);
    for (const auto& a : artifacts) {
      const fs::path target = fs::path(dir) / a.name;
      fs::create_directories(target.parent_path());
      fs::path tmp = target;
      tmp += ".partial";
      temps.push_back(tmp);
      std::ofstream out(tmp, a.binary ? std::ios::binary : std::ios::out);
      out << a.content;
      out.close();
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    for (const auto& a : artifacts) {
      const fs::path target = fs::path(dir) / a.name;
      fs::path tmp = target;
      tmp += ".partial";
      fs::rename(tmp, target);
    }
  } catch (...) {
    cleanup();
    throw;
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
      dynamic_cast<const ParameterError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const StabilizationTimeoutError*>(&e)) return 4;
  return 3;
}

}  // namespace kdv::experiment
