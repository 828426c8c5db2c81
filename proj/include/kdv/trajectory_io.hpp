#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kdv/dynamics.hpp"

namespace kdv {

/// Shortest round-trip decimal representation, independent of locale.
std::string format_double(double v);

/// Frozen CSV layout: optional '#'-prefixed provenance lines, then the header
/// `t,mass,l2,h_s,control_effort` and one row per sample.
void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& rec, const std::vector<std::string>& provenance = {});
TrajectoryRecord read_trajectory_csv(std::istream& in);

struct DumpSample {
  double t = 0.0;
  int segment = 0;
  double work = 0.0;
  std::vector<double> values;  // physical samples at x_j = 2 pi j / N
};

/// Time-stamped field samples, shared by trajectory dumps and control signals.
struct FieldDump {
  std::string quantity = "u";
  int n_modes = 0;
  double mu = 0.0;
  std::string config_json;  // embedded resolved config (may be empty)
  std::vector<DumpSample> samples;
};

void write_field_dump(std::ostream& out, const FieldDump& dump);
FieldDump read_field_dump(std::istream& in);

/// Builds a dump from a record that stored its fields.
FieldDump make_field_dump(const TrajectoryRecord& rec, double mu, const std::string& config_json = {});

}  // namespace kdv
