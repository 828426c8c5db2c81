#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kdv/diagnostics.hpp"
#include "kdv/errors.hpp"
#include "kdv/steering.hpp"
#include "../support/testing.hpp"

using namespace kdv;
using kdv::testing::kPi;
using kdv::testing::random_field;

namespace {

ControlProfile default_profile(const SpectralGrid& g) { return ControlProfile::bump(kPi, kPi / 2, g); }

// Time L2 inner product of two signals sampled on the same nodes (trapezoid rule).
double time_inner(const ControlSignal& a, const ControlSignal& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.segments().size(); ++i) {
    const auto& x = a.segments()[i];
    const auto& y = b.segments()[i];
    for (std::size_t j = 0; j < x.samples.size(); ++j) {
      const double w = (j == 0 || j + 1 == x.samples.size()) ? 0.5 : 1.0;
      s += w * x.spacing * inner(x.samples[j], y.samples[j]);
    }
  }
  return s;
}

SimulateOptions quiet() {
  SimulateOptions o;
  o.sample_every = 1 << 30;
  return o;
}

}  // namespace

TEST_CASE("control segments interpolate cubics exactly") {
  SpectralGrid g(16);
  const Field a = random_field(g, 5, 1), b = random_field(g, 5, 2);
  auto cubic = [&](double t) { return a * (1.0 + t * t * t) + b * (t - 2 * t * t); };
  ControlSegment seg{0.5, 0.1, {}};
  for (int i = 0; i <= 10; ++i) seg.samples.push_back(cubic(0.5 + 0.1 * i));
  for (double t : {0.5, 0.53, 0.77, 1.01, 1.5}) CHECK(l2_norm(seg.at(t) - cubic(t)) <= 1e-13);
  CHECK(seg.t_end() == doctest::Approx(1.5));
}

TEST_CASE("control signals") {
  SpectralGrid g(16);
  auto z = ControlSignal::zero(g, 1.0, 0.25);
  CHECK(z.duration() == doctest::Approx(1.0));
  CHECK(z.max_norm() == 0.0);
  const Field a = random_field(g, 5, 3);
  ControlSignal s(g);
  s.append({0.0, 0.5, {a, a, a}});
  s.append({1.0, 0.5, {a * 2.0, a * 2.0}});
  CHECK(s.duration() == doctest::Approx(1.5));
  CHECK(l2_norm(s.at(1.0) - a * 2.0) == 0.0);
  CHECK(s.max_norm() == doctest::Approx(2.0 * l2_norm(a)));
  CHECK(s.l2_time_norm() == doctest::Approx(std::sqrt(1.0 * 1.0 + 4.0 * 0.5) * l2_norm(a)));
  CHECK_THROWS_AS(s.append({5.0, 0.5, {a, a}}), UsageError);
  CHECK_THROWS_AS(s + z, UsageError);
  const auto back = ControlSignal::from_dump(s.to_dump(0.3));
  REQUIRE(back.segments().size() == 2);
  CHECK(l2_norm(back.at(0.7) - s.at(0.7)) <= 1e-14);
  CHECK(l2_norm(back.at(1.25) - s.at(1.25)) <= 1e-14);
  ControlSignal long_one(g);
  long_one.append({0.0, 0.25, {a, a * 2.0, a * 3.0, a * 4.0, a * 5.0}});
  const auto thin = ControlSignal::from_dump(long_one.to_dump(0.0, {}, 2));
  REQUIRE(thin.segments().size() == 1);
  CHECK(thin.segments()[0].samples.size() == 3);
  CHECK(thin.segments()[0].spacing == 0.5);
  CHECK(l2_norm(thin.at(0.5) - a * 3.0) <= 1e-14);
  CHECK_THROWS_AS(long_one.to_dump(0.0, {}, 0), ParameterError);
}

TEST_CASE("HUM with a free endpoint needs no control") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.4);
  const auto gram = build_control_gramian(p, 1.0, sym);
  const Field v0 = random_field(g, 8, 4);
  const auto hum = hum_linear(v0, w_propagate(v0, 1.0, sym), 1.0, gram, p, sym, 0.01);
  CHECK(hum.control.max_norm() <= 1e-14);
  const auto zero = hum_linear(Field(g), Field(g), 1.0, gram, p, sym, 0.01);
  CHECK(zero.control.max_norm() == 0.0);
}

TEST_CASE("HUM control reaches the target and has minimal norm") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.0);
  StepperConfig cfg;
  cfg.dt = 1e-4;
  cfg.nonlinear = false;
  const double spacing = 5e-5;
  const auto gram = build_control_gramian(p, 1.0, sym);
  const Field v0 = random_field(g, 8, 5), v1 = random_field(g, 8, 6);
  const auto hum = hum_linear(v0, v1, 1.0, gram, p, sym, spacing);
  CHECK(hum.regularization == 0.0);
  const Field end = *replay(v0, hum.control, cfg, sym, p, quiet()).final_state;
  CHECK(l2_norm(end - v1) <= 1e-6 * l2_norm(v1 - w_propagate(v0, 1.0, sym)));

  // A control q that is not of adjoint form, corrected so that it steers 0 to 0.
  const Field r = random_field(g, 10, 7);
  ControlSignal q(g);
  {
    ControlSegment seg{0.0, spacing, {}};
    const int n = static_cast<int>(std::lround(1.0 / spacing));
    for (int i = 0; i <= n; ++i) seg.samples.push_back(r * std::sin(3.0 * i * spacing));
    q.append(std::move(seg));
  }
  const Field e = *replay(Field(g), q, cfg, sym, p, quiet()).final_state;
  const auto fix = hum_linear(Field(g), e, 1.0, gram, p, sym, spacing);
  const ControlSignal null = q + fix.control.scaled(-1.0);
  CHECK(l2_norm(*replay(Field(g), null, cfg, sym, p, quiet()).final_state) <= 1e-6 * l2_norm(e));
  // First-order optimality: the HUM control is orthogonal to every null control.
  const double cosine = time_inner(hum.control, null) / (hum.control.l2_time_norm() * null.l2_time_norm());
  CHECK(std::abs(cosine) <= 1e-5);
  for (double eps : {-0.1, 0.1}) {
    CHECK((hum.control + null.scaled(eps)).l2_time_norm() > hum.control.l2_time_norm());
  }
}

TEST_CASE("HUM argument checks") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.0);
  const auto gram = build_control_gramian(p, 1.0, sym);
  const Field v = random_field(g, 4, 1);
  CHECK_THROWS_AS(hum_linear(v, v, 2.0, gram, p, sym, 0.01), ParameterError);
  CHECK_THROWS_AS(hum_linear(v + Field::constant(1.0, g), v, 1.0, gram, p, sym, 0.01), ParameterError);
  CHECK_THROWS_AS(hum_linear(v, v, 1.0, build_ggstar(p), p, sym, 0.01), ParameterError);
  CHECK_THROWS_AS(hum_linear(v, v, 1.0, gram, p, sym, 0.0), ParameterError);
}

TEST_CASE("local steering") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const double mu = 0.2;
  const auto m = SteeringMachinery::make(StepperConfig{}, LinearSymbol(mu), p, 1.0);
  const Field c = Field::constant(mu, g);

  SUBCASE("target on the free trajectory") {
    const Field u = c + random_field(g, 4, 2, 0.05);
    const Field free_end = *simulate(u - c, 1.0, m.stepper, m.symbol, Forcing{}, quiet()).final_state + c;
    const auto res = steer_local({u, free_end, 1.0, mu}, m);
    CHECK(res.iterations == 0);
    CHECK(res.control.max_norm() == 0.0);
  }
  SUBCASE("small states converge geometrically") {
    const SteeringProblem pb{c + random_field(g, 5, 3, 0.05), c + random_field(g, 5, 4, 0.05), 1.0, mu};
    const auto res = steer_local(pb, m);
    CHECK(res.residuals.back() <= 1e-6);
    for (std::size_t i = 1; i < res.residuals.size(); ++i) CHECK(res.residuals[i] <= 0.5 * res.residuals[i - 1]);
    SimulateOptions o = quiet();
    const auto rec = replay(pb.u0 - c, res.control, m.stepper, m.symbol, p, o);
    CHECK(l2_norm(*rec.final_state - (pb.u1 - c)) <= 1e-6);
    CHECK(mass_drift(rec) == 0.0);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(steer_local({c + random_field(g, 5, 5, 1.0), c, 1.0, mu}, m), ParameterError);
    CHECK_THROWS_AS(steer_local({c, c * 2.0, 1.0, mu}, m), ParameterError);
    CHECK_THROWS_AS(steer_local({Field(g), Field(g), 1.0, 0.0}, m), ParameterError);
    CHECK_THROWS_AS(steer_local({c, c, -1.0, mu}, m), ParameterError);
  }
  SUBCASE("too few iterations") {
    const SteeringProblem pb{c + random_field(g, 5, 6, 0.05), c + random_field(g, 5, 7, 0.05), 1.0, mu, 1e-12, 1};
    CHECK_THROWS_AS(steer_local(pb, m), DivergenceError);
  }
}

TEST_CASE("global steering between small states reduces to the local step") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const auto m = SteeringMachinery::make(StepperConfig{}, LinearSymbol(0.0), p, 1.0);
  const SteeringProblem pb{random_field(g, 5, 8, 0.05), random_field(g, 5, 9, 0.05), 1.0, 0.0};
  const auto res = steer_global(pb, m);
  CHECK(res.report.t_stabilize_start == 0.0);
  CHECK(res.report.t_stabilize_target == 0.0);
  CHECK(res.report.total_time() == doctest::Approx(1.0));
  CHECK(res.report.replay_error <= 1e-6);
  CHECK(res.report.max_mass_drift == 0.0);
}

TEST_CASE("global steering with a damping stage") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const auto m = SteeringMachinery::make(StepperConfig{}, LinearSymbol(0.0), p, 1.0);
  const SteeringProblem pb{random_field(g, 3, 10, 0.12), random_field(g, 3, 11, 0.12), 1.0, 0.0};
  const auto res = steer_global(pb, m, GlobalOptions{0.1, 200.0});
  CHECK(res.report.t_stabilize_start > 0.0);
  CHECK(res.report.t_stabilize_target > 0.0);
  CHECK(res.report.replay_error <= 1e-3);
  CHECK(res.report.max_mass_drift <= 1e-10);
}

TEST_CASE("global steering needs an even profile") {
  SpectralGrid g(32);
  const auto m = SteeringMachinery::make(StepperConfig{}, LinearSymbol(0.0), ControlProfile::bump(1.0, 1.0, g), 1.0);
  const SteeringProblem pb{random_field(g, 5, 8, 0.05), random_field(g, 5, 9, 0.05), 1.0, 0.0};
  CHECK_THROWS_AS(steer_global(pb, m), ParameterError);
  const auto even = SteeringMachinery::make(StepperConfig{}, LinearSymbol(0.0), ControlProfile::bump(kPi, 1.0, g), 1.0);
  CHECK_THROWS_AS(steer_global(pb, even, GlobalOptions{0.5, 10.0}), ParameterError);
}

TEST_CASE("stage timeout is reported") {
  SpectralGrid g(32);
  const auto m = SteeringMachinery::make(StepperConfig{}, LinearSymbol(0.0), ControlProfile::bump(kPi, 1.0, g), 1.0);
  const SteeringProblem pb{random_field(g, 5, 8, 2.0), random_field(g, 5, 9, 0.05), 1.0, 0.0};
  CHECK_THROWS_AS(steer_global(pb, m, GlobalOptions{0.1, 1.0}), StabilizationTimeoutError);
}
