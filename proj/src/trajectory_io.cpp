#include "kdv/trajectory_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "kdv/errors.hpp"

namespace kdv {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

namespace {

constexpr const char* kHeader = "t,mass,l2,h_s,control_effort";

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw UsageError("trajectory csv: bad number in " + what);
  return v;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& rec, const std::vector<std::string>& provenance) {
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << kHeader << '\n';
  for (const auto& s : rec.samples) {
    out << format_double(s.t) << ',' << format_double(s.mass) << ',' << format_double(s.l2) << ','
        << format_double(s.hs) << ',' << format_double(s.control_effort) << '\n';
  }
}

TrajectoryRecord read_trajectory_csv(std::istream& in) {
  TrajectoryRecord rec;
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kHeader) throw UsageError("trajectory csv: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    while (true) {
      auto pos = rest.find(',');
      cols.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (cols.size() != 5) throw UsageError("trajectory csv: line " + std::to_string(line_no) + " has wrong column count");
    const std::string where = "line " + std::to_string(line_no);
    TrajectorySample s;
    s.t = parse_double(cols[0], where);
    s.mass = parse_double(cols[1], where);
    s.l2 = parse_double(cols[2], where);
    s.hs = parse_double(cols[3], where);
    s.control_effort = parse_double(cols[4], where);
    rec.samples.push_back(s);
  }
  if (!header_seen) throw UsageError("trajectory csv: missing header");
  return rec;
}

void write_field_dump(std::ostream& out, const FieldDump& dump) {
  nlohmann::json j;
  j["format"] = "kdv-field-dump";
  j["version"] = 1;
  j["quantity"] = dump.quantity;
  j["n_modes"] = dump.n_modes;
  j["mu"] = dump.mu;
  if (!dump.config_json.empty()) j["config"] = nlohmann::json::parse(dump.config_json);
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& s : dump.samples) {
    arr.push_back({{"t", s.t}, {"segment", s.segment}, {"work", s.work}, {"values", s.values}});
  }
  out << j.dump() << '\n';
}

FieldDump read_field_dump(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("field dump: ") + e.what());
  }
  if (j.value("format", "") != "kdv-field-dump") throw UsageError("field dump: not a kdv-field-dump file");
  FieldDump d;
  d.quantity = j.value("quantity", "u");
  d.n_modes = j.at("n_modes").get<int>();
  d.mu = j.value("mu", 0.0);
  if (j.contains("config")) d.config_json = j["config"].dump();
  for (const auto& s : j.at("samples")) {
    DumpSample ds;
    ds.t = s.at("t").get<double>();
    ds.segment = s.value("segment", 0);
    ds.work = s.value("work", 0.0);
    ds.values = s.at("values").get<std::vector<double>>();
    if (static_cast<int>(ds.values.size()) != d.n_modes) throw DimensionError("field dump: sample size mismatch");
    d.samples.push_back(std::move(ds));
  }
  return d;
}

FieldDump make_field_dump(const TrajectoryRecord& rec, double mu, const std::string& config_json) {
  if (rec.fields.size() != rec.samples.size()) throw UsageError("field dump: record did not store its fields");
  FieldDump d;
  d.mu = mu;
  d.config_json = config_json;
  d.n_modes = rec.fields.empty() ? 0 : rec.fields.front().grid().size();
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    d.samples.push_back({rec.samples[i].t, 0, rec.samples[i].work, rec.fields[i].to_physical()});
  }
  return d;
}

}  // namespace kdv
