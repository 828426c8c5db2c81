#include "kdv/steering.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <sstream>

#include "kdv/errors.hpp"
#include "kdv/feedback.hpp"
#include "kdv/kernels.hpp"

namespace kdv {

namespace {

Field combine(std::span<const Field> fields, std::span<const double> weights) {
  const SpectralGrid& grid = fields.front().grid();
  std::vector<cplx> c(grid.half_size(), 0.0);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto fc = fields[i].coeffs();
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += weights[i] * fc[k];
  }
  return Field(grid, std::move(c));
}

long steps_for(double duration, double dt) { return std::max(1L, static_cast<long>(std::ceil(duration / dt - 1e-9))); }

}  // namespace

Field ControlSegment::at(double t) const {
  const auto n = static_cast<long>(samples.size());
  if (n == 0) throw UsageError("control segment is empty");
  if (n == 1) return samples.front();
  double x = (t - t0) / spacing;
  const double slack = 1e-9 * static_cast<double>(n);
  if (x < -slack || x > static_cast<double>(n - 1) + slack) {
    std::ostringstream msg;
    msg << "control segment queried at t = " << t << " outside [" << t0 << ", " << t_end() << "]";
    throw UsageError(msg.str());
  }
  x = std::clamp(x, 0.0, static_cast<double>(n - 1));
  const double nearest = std::round(x);
  if (std::abs(x - nearest) < 1e-9) return samples[static_cast<std::size_t>(nearest)];
  const long order = std::min(4L, n);
  long start = static_cast<long>(std::floor(x)) - (order == 4 ? 1 : 0);
  start = std::clamp(start, 0L, n - order);
  std::vector<double> w(order);
  for (long i = 0; i < order; ++i) {
    double li = 1.0;
    for (long j = 0; j < order; ++j) {
      if (j != i) li *= (x - double(start + j)) / double(i - j);
    }
    w[i] = li;
  }
  return combine(std::span(samples).subspan(start, order), w);
}

ControlSignal ControlSignal::zero(const SpectralGrid& grid, double duration, double spacing) {
  ControlSignal s(grid);
  const long n = std::lround(duration / spacing);
  s.append({0.0, spacing, std::vector<Field>(static_cast<std::size_t>(n + 1), Field(grid))});
  return s;
}

void ControlSignal::append(ControlSegment segment) {
  if (segment.samples.empty()) throw UsageError("control signal: empty segment");
  if (!(segment.samples.front().grid() == grid_)) throw DimensionError("control signal: segment on another grid");
  if (segment.samples.size() > 1 && !(segment.spacing > 0.0)) throw UsageError("control signal: bad spacing");
  if (!segments_.empty()) {
    const double end = segments_.back().t_end();
    if (std::abs(segment.t0 - end) > 1e-9 * std::max(1.0, end)) {
      throw UsageError("control signal: segments must be contiguous");
    }
  }
  segments_.push_back(std::move(segment));
}

double ControlSignal::duration() const {
  return segments_.empty() ? 0.0 : segments_.back().t_end() - segments_.front().t0;
}

Field ControlSignal::at(double t) const {
  if (segments_.empty()) throw UsageError("control signal is empty");
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
    if (t >= it->t0 - 1e-12) return it->at(t);
  }
  return segments_.front().at(t);
}

double ControlSignal::l2_time_norm() const {
  double sum = 0.0;
  for (const auto& seg : segments_) {
    for (std::size_t i = 0; i < seg.samples.size(); ++i) {
      const double w = (i == 0 || i + 1 == seg.samples.size()) ? 0.5 : 1.0;
      sum += w * seg.spacing * inner(seg.samples[i], seg.samples[i]);
    }
  }
  return std::sqrt(sum);
}

ControlSignal ControlSignal::operator+(const ControlSignal& other) const {
  if (segments_.size() != other.segments_.size()) throw UsageError("control signal sum: layouts differ");
  ControlSignal out(grid_);
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const auto& a = segments_[s];
    const auto& b = other.segments_[s];
    if (a.samples.size() != b.samples.size() || std::abs(a.spacing - b.spacing) > 1e-14 * a.spacing ||
        std::abs(a.t0 - b.t0) > 1e-12) {
      throw UsageError("control signal sum: layouts differ");
    }
    ControlSegment seg{a.t0, a.spacing, {}};
    seg.samples.reserve(a.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) seg.samples.push_back(a.samples[i] + b.samples[i]);
    out.append(std::move(seg));
  }
  return out;
}

ControlSignal ControlSignal::scaled(double s) const {
  ControlSignal out(grid_);
  for (const auto& a : segments_) {
    ControlSegment seg{a.t0, a.spacing, {}};
    for (const auto& f : a.samples) seg.samples.push_back(f * s);
    out.append(std::move(seg));
  }
  return out;
}

double ControlSignal::max_norm() const {
  double m = 0.0;
  for (const auto& seg : segments_) {
    for (const auto& f : seg.samples) m = std::max(m, l2_norm(f));
  }
  return m;
}

FieldDump ControlSignal::to_dump(double mu, const std::string& config_json, std::size_t stride) const {
  if (stride == 0) throw ParameterError("to_dump: stride must be positive");
  FieldDump d;
  d.quantity = "h";
  d.n_modes = grid_.size();
  d.mu = mu;
  d.config_json = config_json;
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const auto& seg = segments_[s];
    for (std::size_t i = 0; i < seg.samples.size(); i += stride) {
      d.samples.push_back({seg.t0 + seg.spacing * static_cast<double>(i), static_cast<int>(s), 0.0,
                           seg.samples[i].to_physical()});
    }
  }
  return d;
}

ControlSignal ControlSignal::from_dump(const FieldDump& dump) {
  const SpectralGrid grid(dump.n_modes);
  ControlSignal out(grid);
  std::map<int, std::vector<const DumpSample*>> by_segment;
  for (const auto& s : dump.samples) by_segment[s.segment].push_back(&s);
  for (const auto& [id, list] : by_segment) {
    ControlSegment seg;
    seg.t0 = list.front()->t;
    seg.spacing = list.size() > 1 ? (list.back()->t - list.front()->t) / static_cast<double>(list.size() - 1) : 0.0;
    for (const auto* s : list) seg.samples.push_back(Field::from_physical(s->values, grid));
    out.append(std::move(seg));
  }
  return out;
}

void SteeringProblem::validate() const {
  check_same_grid(u0, u1);
  if (!(T > 0.0)) throw ParameterError("steering: T must be > 0");
  if (std::abs(u0.mean() - u1.mean()) > 1e-10) throw ParameterError("steering: [u0] and [u1] must be equal");
  if (std::abs(u0.mean() - mu) > 1e-10) throw ParameterError("steering: mu must equal the common mean [u0]");
  if (!(tolerance > 0.0)) throw ParameterError("steering: tolerance must be > 0");
  if (max_picard < 1) throw ParameterError("steering: max_picard must be >= 1");
}

SteeringMachinery SteeringMachinery::make(const StepperConfig& cfg, const LinearSymbol& sym, const ControlProfile& p,
                                          double T) {
  SteeringMachinery m{cfg, sym, std::make_shared<const ControlProfile>(p), nullptr};
  m.gramian = std::make_shared<const OperatorMatrix>(build_control_gramian(p, T, sym));
  return m;
}

double SteeringMachinery::sample_spacing(double T) const {
  return T / static_cast<double>(steps_for(T, stepper.dt)) / 2.0;
}

HumSolution hum_linear(const Field& v0, const Field& v1, double T, const OperatorMatrix& gramian,
                       const ControlProfile& p, const LinearSymbol& sym, double spacing, bool allow_regularization) {
  check_same_grid(v0, v1);
  if (!(v0.grid() == p.grid())) throw DimensionError("hum_linear: profile grid differs");
  if (gramian.kind() != OperatorKind::ControlGramian) throw ParameterError("hum_linear: expected a control Gramian");
  if (std::abs(gramian.param() - T) > 1e-12 * std::max(1.0, T)) {
    throw ParameterError("hum_linear: Gramian horizon does not match T");
  }
  if (std::abs(gramian.mu() - sym.mu()) > 1e-14) throw ParameterError("hum_linear: Gramian drift does not match");
  if (std::abs(v0.mean()) > 1e-10 || std::abs(v1.mean()) > 1e-10) {
    throw ParameterError("hum_linear: endpoints must have zero mean");
  }
  if (!(spacing > 0.0)) throw ParameterError("hum_linear: spacing must be > 0");

  const Field target = v1 - w_propagate(v0, T, sym);
  const Eigen::VectorXcd rhs = to_mode_vector(target);
  double reg = 0.0;
  if (gramian.condition() > 1e14) {
    if (!allow_regularization) {
      throw IllConditionedError("hum_linear: Gramian condition exceeds 1e14; enable regularization or increase T");
    }
    reg = 1e-12 * gramian.entries().trace().real() / gramian.dimension();
  }
  const Field phi = from_mode_vector(gramian.solve(rhs, reg), v0.grid());

  const long n = std::lround(T / spacing);
  std::vector<double> times(static_cast<std::size_t>(n + 1));
  for (long i = 0; i <= n; ++i) times[i] = (i == n) ? T : static_cast<double>(i) * spacing;
  ControlSignal control(v0.grid());
  control.append({0.0, T / static_cast<double>(n), kernels::sample_adjoint_control(phi, times, T, p, sym)});
  return {std::move(control), phi, reg, reg * l2_norm(phi)};
}

TrajectoryRecord replay(const Field& u0, const ControlSignal& control, const StepperConfig& cfg,
                        const LinearSymbol& sym, const ControlProfile& p, SimulateOptions opts) {
  if (!(u0.grid() == control.grid())) throw DimensionError("replay: control grid differs");
  opts.law = "open_loop";
  TrajectoryRecord total;
  total.law = opts.law;
  total.hs_index = opts.hs_index;
  Field u = u0;
  double work_offset = 0.0;
  bool first = true;
  for (const auto& seg : control.segments()) {
    const double duration = seg.t_end() - seg.t0;
    if (!(duration > 0.0)) continue;
    Forcing forcing = [&seg, &p](const Field&, double tau) { return apply_G(seg.at(seg.t0 + tau), p); };
    SimulateOptions local = opts;
    if (opts.on_step) {
      local.on_step = [&](double tau, const Field& state) { opts.on_step(seg.t0 + tau, state); };
    }
    TrajectoryRecord rec = simulate(u, duration, cfg, sym, forcing, local);
    if (first) total.initial_l2_sq = rec.initial_l2_sq;
    for (std::size_t i = first ? 0 : 1; i < rec.samples.size(); ++i) {
      auto s = rec.samples[i];
      s.t += seg.t0;
      s.work += work_offset;
      total.samples.push_back(s);
      if (opts.store_fields) total.fields.push_back(rec.fields[i]);
    }
    total.max_step_increase = std::max(total.max_step_increase, rec.max_step_increase);
    work_offset = total.samples.back().work;
    u = *rec.final_state;
    first = false;
  }
  if (first) throw UsageError("replay: control signal has zero duration");
  total.final_state = u;
  return total;
}

namespace {

LocalSteering steer_shifted(const Field& w0, const Field& w1, double T, double tolerance, int max_picard,
                            const SteeringMachinery& m) {
  const ControlProfile& p = *m.profile;
  const double spacing = m.sample_spacing(T);
  SimulateOptions quiet;
  quiet.sample_every = 1 << 30;
  quiet.hs_index = 0.0;

  LocalSteering out{ControlSignal::zero(w0.grid(), T, spacing), {}, 0, w0};
  int rising = 0;
  for (int it = 0;; ++it) {
    const auto rec = replay(w0, out.control, m.stepper, m.symbol, p, quiet);
    out.final_state = *rec.final_state;
    const Field miss = w1 - out.final_state;
    const double residual = l2_norm(miss);
    if (!out.residuals.empty()) rising = residual > out.residuals.back() ? rising + 1 : 0;
    out.residuals.push_back(residual);
    if (residual <= tolerance) return out;
    if (rising >= 3) {
      throw DivergenceError("local steering diverged (residual grew 3 times in a row); use smaller states or a "
                            "larger horizon T");
    }
    if (it >= max_picard) {
      std::ostringstream msg;
      msg << "local steering did not reach tolerance " << tolerance << " within " << max_picard
          << " Picard iterations (residual " << residual << ")";
      throw DivergenceError(msg.str());
    }
    const auto hum = hum_linear(Field(w0.grid()), mean_project(miss), T, *m.gramian, p, m.symbol, spacing,
                                m.allow_regularization);
    out.control = out.control + hum.control;
    out.iterations = it + 1;
  }
}

struct StabilizedRun {
  std::vector<Field> controls;  // control sample at every step, including t = 0
  Field end;
  double dt = 0.0;
};

// Damps w0 until ||w|| <= epsilon, keeping sample(w) at every step.
StabilizedRun stabilize(const Field& w0, double epsilon, double max_time, const SteeringMachinery& m,
                        const char* stage, const std::function<Field(const Field&)>& sample) {
  StabilizedRun run{{sample(w0)}, w0, 0.0};
  if (l2_norm(w0) <= epsilon) return run;
  const long n_max = steps_for(max_time, m.stepper.dt);
  run.dt = max_time / static_cast<double>(n_max);
  SimulateOptions opts;
  opts.sample_every = 1 << 30;
  opts.on_step = [&](double, const Field& u) {
    run.controls.push_back(sample(u));
    run.end = u;
  };
  opts.stop_when = [&](double, const Field& u) { return l2_norm(mean_project(u)) <= epsilon; };
  simulate(w0, max_time, m.stepper, m.symbol, FeedbackLaw::damping(*m.profile), opts);
  if (l2_norm(mean_project(run.end)) > epsilon) {
    std::ostringstream msg;
    msg << "stage " << stage << ": damping did not reach ||u|| <= " << epsilon << " within t = " << max_time;
    throw StabilizationTimeoutError(msg.str());
  }
  return run;
}

}  // namespace

LocalSteering steer_local(const SteeringProblem& pb, const SteeringMachinery& m) {
  pb.validate();
  if (std::abs(m.symbol.mu() - pb.mu) > 1e-12) throw ParameterError("steer_local: machinery drift differs from mu");
  const Field w0 = mean_project(pb.u0);
  const Field w1 = mean_project(pb.u1);
  if (l2_norm(w0) > m.smallness || l2_norm(w1) > m.smallness) {
    std::ostringstream msg;
    msg << "steer_local: states must satisfy ||u - mu||_0 <= " << m.smallness;
    throw ParameterError(msg.str());
  }
  return steer_shifted(w0, w1, pb.T, pb.tolerance, pb.max_picard, m);
}

GlobalSteering steer_global(const SteeringProblem& pb, const SteeringMachinery& m, const GlobalOptions& opts) {
  pb.validate();
  if (!m.profile->is_even()) {
    throw ParameterError("steer_global: the control profile must be even, g(-x) = g(x)");
  }
  if (std::abs(m.symbol.mu() - pb.mu) > 1e-12) throw ParameterError("steer_global: machinery drift differs from mu");
  if (!(opts.epsilon > 0.0) || opts.epsilon > m.smallness) {
    throw ParameterError("steer_global: epsilon must lie in (0, smallness]");
  }
  const ControlProfile& p = *m.profile;
  const Field w0 = mean_project(pb.u0);
  const Field w1 = mean_project(pb.u1);

  // Stages A and B are independent.
  auto stage_b = std::async(std::launch::async, [&] {
    return stabilize(reflect(w1), opts.epsilon, opts.max_stage_time, m, "B",
                     [&p](const Field& z) { return apply_Gstar(reflect(z), p); });
  });
  StabilizedRun a = stabilize(w0, opts.epsilon, opts.max_stage_time, m, "A",
                                    [&p](const Field& u) { return -apply_Gstar(u, p); });
  const StabilizedRun b = stage_b.get();

  ControlSignal control(w0.grid());
  StageReport report;
  Field a_end = w0;
  if (a.controls.size() > 1) {
    ControlSegment seg{0.0, a.dt, std::move(a.controls)};
    report.t_stabilize_start = seg.t_end();
    ControlSignal only_a(w0.grid());
    only_a.append(seg);
    SimulateOptions quiet;
    quiet.sample_every = 1 << 30;
    a_end = *replay(w0, only_a, m.stepper, m.symbol, p, quiet).final_state;
    control.append(std::move(seg));
  }

  // The damped trajectory z from R(u1), reversed and reflected, is a
  // controlled trajectory ending at u1 with h = +G* R z(T_B - t).
  const Field b_start = reflect(b.end);
  const auto connect = steer_shifted(a_end, b_start, pb.T, pb.tolerance, pb.max_picard, m);
  report.picard_iterations = connect.iterations;
  report.local_residual = connect.residuals.back();
  for (auto seg : connect.control.segments()) {
    seg.t0 += report.t_stabilize_start;
    control.append(std::move(seg));
  }
  report.t_connect = pb.T;

  if (b.controls.size() > 1) {
    ControlSegment seg{report.t_stabilize_start + report.t_connect, b.dt, {b.controls.rbegin(), b.controls.rend()}};
    report.t_stabilize_target = seg.t_end() - seg.t0;
    control.append(std::move(seg));
  }

  SimulateOptions opts_replay;
  opts_replay.sample_every = 50;
  opts_replay.hs_index = 0.0;
  TrajectoryRecord rec = replay(w0, control, m.stepper, m.symbol, p, opts_replay);
  report.replay_error = l2_norm(*rec.final_state - w1);
  const double mass0 = rec.samples.front().mass;
  for (const auto& s : rec.samples) report.max_mass_drift = std::max(report.max_mass_drift, std::abs(s.mass - mass0));
  return {std::move(control), report, std::move(rec)};
}

}  // namespace kdv
