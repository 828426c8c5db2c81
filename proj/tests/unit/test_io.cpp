#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "kdv/errors.hpp"
#include "kdv/trajectory_io.hpp"
#include "../support/testing.hpp"

using namespace kdv;

TEST_CASE("doubles are written in shortest round-trip form") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, std::numeric_limits<double>::min()}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("trajectory CSV round trip") {
  TrajectoryRecord rec;
  for (int i = 0; i < 5; ++i) rec.samples.push_back({0.1 * i, 0.3, std::exp(-i / 3.0), 2.0 / (i + 1), 1e-3 * i, 0.0});
  std::stringstream s;
  write_trajectory_csv(s, rec, {"kdvctl test", "second line"});
  const std::string text = s.str();
  CHECK(text.rfind("# kdvctl test\n# second line\nt,mass,l2,h_s,control_effort\n", 0) == 0);
  const auto back = read_trajectory_csv(s);
  REQUIRE(back.samples.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(back.samples[i].t == rec.samples[i].t);
    CHECK(back.samples[i].mass == rec.samples[i].mass);
    CHECK(back.samples[i].l2 == rec.samples[i].l2);
    CHECK(back.samples[i].hs == rec.samples[i].hs);
    CHECK(back.samples[i].control_effort == rec.samples[i].control_effort);
  }
}

TEST_CASE("malformed CSV is rejected") {
  std::stringstream no_header("0,1,2,3,4\n");
  CHECK_THROWS_AS(read_trajectory_csv(no_header), UsageError);
  std::stringstream wrong_header("t,mass,l2\n0,1,2\n");
  CHECK_THROWS_AS(read_trajectory_csv(wrong_header), UsageError);
  std::stringstream short_row("t,mass,l2,h_s,control_effort\n0,1,2\n");
  CHECK_THROWS_AS(read_trajectory_csv(short_row), UsageError);
  std::stringstream bad_number("t,mass,l2,h_s,control_effort\n0,1,x,3,4\n");
  CHECK_THROWS_AS(read_trajectory_csv(bad_number), UsageError);
}

TEST_CASE("field dump round trip") {
  SpectralGrid g(16);
  TrajectoryRecord rec;
  for (int i = 0; i < 3; ++i) {
    const Field f = kdv::testing::random_field(g, 7, i + 1);
    rec.samples.push_back({0.5 * i, 0.0, l2_norm(f), 0.0, 0.0, -0.01 * i});
    rec.fields.push_back(f);
  }
  const FieldDump d = make_field_dump(rec, 0.25, "{\"name\":\"x\"}");
  CHECK(d.n_modes == 16);
  CHECK(d.samples.size() == 3);
  std::stringstream s;
  write_field_dump(s, d);
  const FieldDump back = read_field_dump(s);
  CHECK(back.quantity == "u");
  CHECK(back.mu == 0.25);
  CHECK(back.config_json == "{\"name\":\"x\"}");
  REQUIRE(back.samples.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.samples[i].t == d.samples[i].t);
    CHECK(back.samples[i].work == d.samples[i].work);
    CHECK(back.samples[i].values == d.samples[i].values);
    const Field f = Field::from_physical(back.samples[i].values, g);
    CHECK(l2_norm(f - rec.fields[i]) <= 1e-15);
  }
  TrajectoryRecord no_fields;
  no_fields.samples.push_back({});
  CHECK_THROWS_AS(make_field_dump(no_fields, 0.0), UsageError);
  std::stringstream junk("{\"format\": \"other\"}");
  CHECK_THROWS_AS(read_field_dump(junk), UsageError);
  std::stringstream not_json("not json");
  CHECK_THROWS_AS(read_field_dump(not_json), UsageError);
}
