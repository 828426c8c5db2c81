#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kdv/errors.hpp"
#include "kdv/experiment.hpp"
#include "kdv/trajectory_io.hpp"
#include "../support/testing.hpp"

using namespace kdv;
using namespace kdv::experiment;
using kdv::testing::kPi;

namespace {

json base() {
  return json::parse(R"({
    "schema_version": 1,
    "name": "t",
    "grid": {"n": 32},
    "law": {"kind": "damping"},
    "initial": {"shape": "random", "band": 4, "l2_norm": 0.5, "seed": 3},
    "horizon": 0.5,
    "sampling": {"every": 20},
    "diagnostics": {"fit": {"enabled": false}}
  })");
}

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const Artifact& find(const CommandResult& r, const std::string& name) {
  for (const auto& a : r.artifacts) {
    if (a.name == name) return a;
  }
  FAIL("missing artifact " << name);
  throw std::logic_error("unreachable");
}

std::string without_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') out += line + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("defaults of a minimal config") {
  const auto c = parse_config(json{{"schema_version", 1}});
  CHECK(c.n_modes == 128);
  CHECK(c.mu == 0.0);
  CHECK(c.stepper.dt == 5e-4);
  CHECK(c.profile_center == doctest::Approx(kPi));
  CHECK(c.profile_width == doctest::Approx(kPi / 2));
  CHECK(c.law.kind == "none");
  CHECK(c.sample_every == 100);
  CHECK(!c.steer);
}

TEST_CASE("config errors name the offending field") {
  CHECK(config_error(json::object()).find("schema_version") != std::string::npos);
  CHECK(config_error(json{{"schema_version", 2}}).find("schema_version") != std::string::npos);
  auto j = base();
  j["law"]["lamda"] = 1.0;
  CHECK(config_error(j).find("law.lamda") != std::string::npos);
  j = base();
  j["grid"]["n"] = 33;
  CHECK(config_error(j).find("grid.n") != std::string::npos);
  j = base();
  j["stepper"] = {{"scheme", "euler"}};
  CHECK(config_error(j).find("stepper.scheme") != std::string::npos);
  j = base();
  j["law"] = {{"kind", "time_varying"}, {"delta_switch", 0.3}};
  CHECK(config_error(j).find("law.delta_switch") != std::string::npos);
  j = base();
  j["diagnostics"]["fit"] = {{"window", {0.1, 5.0}}};
  CHECK(config_error(j).find("diagnostics.fit.window") != std::string::npos);
  j = base();
  j["diagnostics"]["fit"] = {{"after_entry", true}};
  CHECK(config_error(j).find("after_entry") != std::string::npos);
  j = base();
  j["sampling"]["dump_every"] = 30;
  CHECK(config_error(j).find("sampling.dump_every") != std::string::npos);
  j = base();
  j["law"]["kind"] = "none";
  j["diagnostics"]["energy_residual"] = true;
  CHECK(config_error(j).find("energy_residual") != std::string::npos);
  j = base();
  j["initial"] = {{"shape", "cosines"}, {"modes", {{{"k", 16}, {"a", 1.0}}}}};
  CHECK(config_error(j).find("initial.modes[0].k") != std::string::npos);
  j = base();
  j["physics"] = {{"mu", 0.5}};
  j["initial"] = {{"shape", "samples"}, {"samples", std::vector<double>(32, 0.0)}};
  CHECK(config_error(j).find("initial.samples") != std::string::npos);
  j = base();
  j["profile"] = {{"center", 1.0}};
  j["steer"] = {{"mode", "global"}, {"target", {{"shape", "zero"}}}};
  CHECK(config_error(j).find("even profile") != std::string::npos);
  j = base();
  j["sweep"] = {{"axes", {{"sweep.kind", {"simulate"}}}}};
  CHECK(config_error(j).find("sweep.axes") != std::string::npos);
  j = base();
  j["horizon"] = "long";
  CHECK(config_error(j).find("horizon") != std::string::npos);
}

TEST_CASE("resolved config round trips") {
  auto j = base();
  j["law"] = {{"kind", "time_varying"}, {"lambda", 2.0}, {"r0", 0.4}};
  j["steer"] = {{"mode", "local"}, {"target", {{"shape", "cosines"}, {"modes", {{{"k", 2}, {"b", 0.1}}}}}}};
  j["diagnostics"] = {{"fit", {{"after_entry", true}}}, {"observability", {{"T", 2.0}, {"band", 4}}}};
  const auto c = parse_config(j);
  const json once = to_json(c);
  CHECK(to_json(parse_config(once)) == once);
  CHECK(once["law"]["r0"] == 0.4);
  CHECK(once["steer"]["target"]["modes"][0]["b"] == 0.1);
}

TEST_CASE("initial data shapes") {
  SpectralGrid g(32);
  DataSpec d;
  d.shape = "cosines";
  d.modes = {{1, 2.0, 0.0}, {3, 0.0, 0.5}};
  const auto u = make_data(d, g, 0.0).to_physical();
  for (int j = 0; j < 32; ++j) {
    const double x = g.point(j);
    CHECK(u[j] == doctest::Approx(2.0 * std::cos(x) + 0.5 * std::sin(3 * x)).epsilon(1e-13));
  }
  d.shape = "random";
  d.l2_norm = 0.7;
  d.band = 5;
  const Field r = make_data(d, g, 0.0);
  CHECK(l2_norm(r) == doctest::Approx(0.7));
  CHECK(std::abs(r.coeff(6)) == 0.0);
  CHECK(r.mean() == 0.0);
  d.shape = "sech2";
  CHECK(make_data(d, g, 0.0).mean() == 0.0);
  d.shape = "samples";
  d.samples.assign(32, 0.3);
  d.samples[0] = 1.3;
  d.samples[1] = -0.7;
  const Field s = make_data(d, g, 0.3);
  CHECK(s.mean() == 0.0);
  CHECK(s.to_physical()[0] == doctest::Approx(1.0));
  d.shape = "zero";
  CHECK(l2_norm(make_data(d, g, 0.0)) == 0.0);
}

TEST_CASE("simulate command artifacts") {
  auto j = base();
  j["physics"] = {{"mu", 0.25}};
  j["sampling"]["dump_every"] = 200;
  const auto c = parse_config(j);
  const RunContext ctx{"9.9", 1, false};
  const auto r = cmd_simulate(c, ctx);
  CHECK(r.exit_code == 0);
  CHECK(r.report["tool"] == "kdvctl");
  CHECK(r.report["version"] == "9.9");
  CHECK(r.report["command"] == "simulate");
  CHECK(r.report["config"] == to_json(c));
  CHECK(r.report["conservation"]["mass_drift"].get<double>() == 0.0);
  const auto& csv = find(r, "trajectory.csv").content;
  CHECK(csv.rfind("# kdvctl 9.9 simulate config=", 0) == 0);
  std::istringstream in(csv);
  const auto rec = read_trajectory_csv(in);
  CHECK(rec.samples.front().mass == 0.25);
  CHECK(rec.samples.back().t == 0.5);
  std::istringstream din(find(r, "fields.json").content);
  const auto dump = read_field_dump(din);
  CHECK(dump.mu == 0.25);
  CHECK(dump.samples.size() == 6);
  double mean = 0.0;
  for (double v : dump.samples[0].values) mean += v / 32;
  CHECK(mean == doctest::Approx(0.25));
  // Runs are reproducible byte for byte.
  const auto again = cmd_simulate(c, ctx);
  CHECK(find(again, "trajectory.csv").content == csv);
  CHECK(find(again, "report.json").content == find(r, "report.json").content);
}

TEST_CASE("a single-cell sweep reproduces simulate") {
  auto j = base();
  j["sweep"] = {{"axes", {{"initial.seed", {3}}}}};
  const auto c = parse_config(j);
  const RunContext ctx;
  const auto sw = cmd_sweep(j, c, ctx);
  CHECK(sw.exit_code == 0);
  CHECK(sw.report["failed_cells"] == 0);
  auto plain = j;
  plain.erase("sweep");
  const auto sim = cmd_simulate(parse_config(plain), ctx);
  CHECK(without_comments(find(sw, "cell_0/trajectory.csv").content) ==
        without_comments(find(sim, "trajectory.csv").content));
}

TEST_CASE("sweep keeps going past failed cells") {
  auto j = base();
  j["sweep"] = {{"axes", {{"grid.n", {32, 33}}}}};
  const auto c = parse_config(j);
  const auto sw = cmd_sweep(j, c, RunContext{"dev", 2, false});
  CHECK(sw.exit_code == 0);
  CHECK(sw.report["failed_cells"] == 1);
  CHECK(sw.report["cells"][0]["status"] == "ok");
  CHECK(sw.report["cells"][1]["status"] == "failed");
  CHECK(sw.report["cells"][1]["error"].get<std::string>().find("grid.n") != std::string::npos);
  j["sweep"] = {{"axes", {{"grid.n", {31, 33}}}}};
  CHECK(cmd_sweep(j, parse_config(j), RunContext{}).exit_code == 3);
}

TEST_CASE("linear steering between zero states") {
  auto j = base();
  j["initial"] = {{"shape", "zero"}};
  j["steer"] = {{"mode", "linear"}, {"target", {{"shape", "zero"}}}};
  const auto r = cmd_steer(parse_config(j), RunContext{});
  CHECK(r.report["control_max_norm"].get<double>() == 0.0);
  CHECK(r.report["replay_error"].get<double>() <= 1e-12);
  std::istringstream in(find(r, "control.json").content);
  CHECK(read_field_dump(in).quantity == "h");
}

TEST_CASE("report command reproduces the fit") {
  auto j = base();
  j["horizon"] = 2.0;
  j["diagnostics"] = {{"fit", {{"window", {0.5, 2.0}}}}};
  const auto c = parse_config(j);
  const auto sim = cmd_simulate(c, RunContext{});
  const auto dir = std::filesystem::temp_directory_path() / "kdv_test_report";
  std::filesystem::remove_all(dir);
  write_artifacts(dir.string(), sim.artifacts);
  const auto rep = cmd_report((dir / "trajectory.csv").string(), "", 0.0, std::make_pair(0.5, 2.0), RunContext{});
  CHECK(rep.report["fit"]["rate"].get<double>() ==
        doctest::Approx(sim.report["fit"]["rate"].get<double>()).epsilon(1e-12));
  CHECK(rep.report["provenance"].size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("artifacts are written all or nothing") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "kdv_test_atomic";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS(write_artifacts(dir.string(), {{"ok.txt", "fine"}, {"blocker/inner.txt", "no"}}));
  CHECK(!fs::exists(dir / "ok.txt"));
  CHECK(!fs::exists(dir / "ok.txt.partial"));
  write_artifacts(dir.string(), {{"ok.txt", "fine"}, {"sub/b.bin", std::string("\0\1", 2), true}});
  CHECK(fs::file_size(dir / "sub/b.bin") == 2);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(ParameterError("x")) == 2);
  CHECK(exit_code_for(UsageError("x")) == 2);
  CHECK(exit_code_for(BlowUpError("x", 1.0)) == 3);
  CHECK(exit_code_for(IllConditionedError("x")) == 3);
  CHECK(exit_code_for(DivergenceError("x")) == 4);
  CHECK(exit_code_for(StabilizationTimeoutError("x")) == 4);
}
