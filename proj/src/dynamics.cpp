#include "kdv/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "kdv/errors.hpp"

namespace kdv {

namespace {

using Coeffs = std::vector<cplx>;

constexpr std::int64_t kMaxDenominator = 1'000'000;

std::optional<std::pair<std::int64_t, std::int64_t>> as_rational(double mu) {
  if (!std::isfinite(mu) || std::abs(mu) > 1e9) return std::nullopt;
  // Continued-fraction convergents p/q.
  double x = mu;
  std::int64_t p0 = 1, q0 = 0;
  std::int64_t p1 = static_cast<std::int64_t>(std::floor(x)), q1 = 1;
  double frac = x - std::floor(x);
  for (int iter = 0; iter < 64; ++iter) {
    if (std::abs(mu - static_cast<double>(p1) / static_cast<double>(q1)) <= 1e-15 * std::max(1.0, std::abs(mu))) {
      return std::make_pair(p1, q1);
    }
    if (frac < 1e-300) break;
    x = 1.0 / frac;
    const auto a = static_cast<std::int64_t>(std::floor(x));
    frac = x - std::floor(x);
    const std::int64_t p2 = a * p1 + p0;
    const std::int64_t q2 = a * q1 + q0;
    if (q2 > kMaxDenominator) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
  }
  return std::nullopt;
}

void zero_above(Coeffs& c, int cutoff) {
  for (std::size_t k = static_cast<std::size_t>(cutoff); k < c.size(); ++k) c[k] = 0.0;
}

Coeffs nonlinear_coeffs(const SpectralGrid& grid, std::span<const cplx> u, bool dealias) {
  Coeffs v(u.begin(), u.end());
  v.back() = 0.0;
  if (dealias) zero_above(v, grid.dealias_cutoff());
  std::vector<double> x(grid.size());
  grid.backward(v, x);
  for (auto& xi : x) xi *= xi;
  Coeffs w(grid.half_size());
  grid.forward(x, w);
  if (dealias) zero_above(w, grid.dealias_cutoff());
  w.back() = 0.0;
  w[0] = 0.0;
  for (std::size_t k = 1; k < w.size(); ++k) w[k] *= cplx(0.0, -0.5 * static_cast<double>(k));
  return w;
}

double meanfree_inner(std::span<const cplx> a, std::span<const cplx> b) {
  const std::size_t last = a.size() - 1;
  double s = (a[last] * std::conj(b[last])).real();
  for (std::size_t k = 1; k < last; ++k) s += 2.0 * (a[k] * std::conj(b[k])).real();
  return s;
}

bool finite_state(std::span<const cplx> c) {
  for (const auto& v : c) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

}  // namespace

LinearSymbol::LinearSymbol(double mu) : mu_(mu), rational_(as_rational(mu)) {}

LinearSymbol LinearSymbol::rational(std::int64_t p, std::int64_t q) {
  if (q <= 0) throw ParameterError("rational drift: denominator must be positive");
  LinearSymbol s(static_cast<double>(p) / static_cast<double>(q));
  const std::int64_t g = std::gcd(p, q);
  s.rational_ = std::make_pair(p / g, q / g);
  return s;
}

double LinearSymbol::omega(int k) const {
  const double kk = static_cast<double>(k);
  return kk * kk * kk - mu_ * kk;
}

bool LinearSymbol::resonant(int k, int l) const {
  if (k == l) return true;
  if (rational_) {
    const auto [p, q] = *rational_;
    const __int128 kk = k, ll = l;
    const __int128 lhs = static_cast<__int128>(q) * (kk * kk * kk - ll * ll * ll);
    const __int128 rhs = static_cast<__int128>(p) * (kk - ll);
    return lhs == rhs;
  }
  const double a = omega(k), b = omega(l);
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

void StepperConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("stepper: dt must be > 0");
}

Field w_propagate(const Field& f, double t, const LinearSymbol& sym) {
  Coeffs c(f.coeffs().begin(), f.coeffs().end());
  for (std::size_t k = 1; k + 1 < c.size(); ++k) {
    // Phases reach 1e5 rad at moderate t; extended precision keeps W(t) a group to ~1e-14.
    const long double kk = static_cast<long double>(k);
    const long double phase = (kk * kk * kk - static_cast<long double>(sym.mu()) * kk) * static_cast<long double>(t);
    c[k] *= cplx(static_cast<double>(std::cos(phase)), static_cast<double>(std::sin(phase)));
  }
  c.back() = 0.0;
  return Field(f.grid(), std::move(c));
}

Field nonlinear_rhs(const Field& f, bool dealias) {
  return Field(f.grid(), nonlinear_coeffs(f.grid(), f.coeffs(), dealias));
}

Stepper::Stepper(const SpectralGrid& grid, const StepperConfig& cfg, const LinearSymbol& sym,
                 std::vector<cplx> linear_shift)
    : grid_(grid), cfg_(cfg), sym_(sym), shift_(std::move(linear_shift)) {
  cfg_.validate();
  if (shift_.empty()) shift_.assign(grid_.half_size(), 0.0);
  if (static_cast<int>(shift_.size()) != grid_.half_size()) throw DimensionError("stepper: linear shift has wrong length");
  shift_[0] = 0.0;
  shift_.back() = 0.0;
  for (const auto& d : shift_) {
    if (!std::isfinite(d.real()) || !std::isfinite(d.imag())) throw ParameterError("stepper: linear shift is not finite");
  }
  default_ = make_coefficients(cfg_.dt);
}

Stepper::Coefficients Stepper::make_coefficients(double dt) const {
  const int half = grid_.half_size();
  Coefficients c;
  c.dt = dt;
  c.e.assign(half, 0.0);
  c.e2.assign(half, 0.0);
  c.q.assign(half, 0.0);
  c.f1.assign(half, 0.0);
  c.f2.assign(half, 0.0);
  c.f3.assign(half, 0.0);
  constexpr int kContour = 64;
  // Nyquist (k = N/2) stays zero.
  for (int k = 0; k + 1 < half; ++k) {
    const cplx z = (cplx(0.0, sym_.omega(k)) - shift_[k]) * dt;
    c.e[k] = std::exp(z);
    c.e2[k] = std::exp(0.5 * z);
    auto phi = [](cplx w, cplx& q, cplx& f1, cplx& f2, cplx& f3) {
      const cplx ew = std::exp(w);
      const cplx w3 = w * w * w;
      q = (std::exp(0.5 * w) - 1.0) / w;
      f1 = (-4.0 - w + ew * (4.0 - 3.0 * w + w * w)) / w3;
      f2 = (2.0 + w + ew * (w - 2.0)) / w3;
      f3 = (-4.0 - 3.0 * w - w * w + ew * (4.0 - w)) / w3;
    };
    cplx q, f1, f2, f3;
    if (std::abs(z) >= 1.0) {
      phi(z, q, f1, f2, f3);
    } else {
      // Mean over a unit circle around z avoids cancellation near z = 0.
      q = f1 = f2 = f3 = 0.0;
      for (int j = 0; j < kContour; ++j) {
        const double ang = 2.0 * std::numbers::pi * (j + 0.5) / kContour;
        cplx a, b, cc, d;
        phi(z + cplx(std::cos(ang), std::sin(ang)), a, b, cc, d);
        q += a;
        f1 += b;
        f2 += cc;
        f3 += d;
      }
      q /= double(kContour);
      f1 /= double(kContour);
      f2 /= double(kContour);
      f3 /= double(kContour);
    }
    c.q[k] = dt * q;
    c.f1[k] = dt * f1;
    c.f2[k] = dt * f2;
    c.f3[k] = dt * f3;
  }
  return c;
}

Stepper::Result Stepper::advance(const Field& u, double t, const Forcing& forcing) const {
  return advance_with(default_, u, t, forcing);
}

Stepper::Result Stepper::advance(const Field& u, double t, const Forcing& forcing, double dt) const {
  if (dt == default_.dt) return advance_with(default_, u, t, forcing);
  return advance_with(make_coefficients(dt), u, t, forcing);
}

Stepper::Result Stepper::advance_with(const Coefficients& c, const Field& u, double t, const Forcing& forcing) const {
  if (!(u.grid() == grid_)) throw DimensionError("stepper: field grid does not match stepper grid");
  return cfg_.scheme == Scheme::ExponentialRK4 ? exp_rk4(c, u, t, forcing) : if_rk4(c, u, t, forcing);
}

namespace {

struct StageEval {
  Coeffs rhs;
  double power;  // 2 <u, F>
};

StageEval evaluate(const SpectralGrid& grid, const Coeffs& u, double t, const Forcing& forcing, bool nonlinear,
                   bool dealias, const Coeffs& shift) {
  StageEval out;
  if (nonlinear) {
    out.rhs = nonlinear_coeffs(grid, u, dealias);
  } else {
    out.rhs.assign(u.size(), 0.0);
  }
  for (std::size_t k = 0; k < u.size(); ++k) out.rhs[k] += shift[k] * u[k];
  out.power = 0.0;
  if (forcing) {
    const Field f = forcing(Field(grid, u), t);
    if (!(f.grid() == grid)) throw DimensionError("forcing returned a field on another grid");
    auto fc = f.coeffs();
    Coeffs fv(fc.begin(), fc.end());
    fv.back() = 0.0;
    out.power = 2.0 * meanfree_inner(u, fv);
    for (std::size_t k = 0; k < fv.size(); ++k) out.rhs[k] += fv[k];
  }
  return out;
}

}  // namespace

Stepper::Result Stepper::exp_rk4(const Coefficients& c, const Field& u0, double t, const Forcing& forcing) const {
  const std::size_t n = c.e.size();
  const double dt = c.dt;
  Coeffs u(u0.coeffs().begin(), u0.coeffs().end());
  u.back() = 0.0;

  const StageEval nu = evaluate(grid_, u, t, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = c.e2[k] * u[k] + c.q[k] * nu.rhs[k];
  const StageEval na = evaluate(grid_, a, t + 0.5 * dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = c.e2[k] * u[k] + c.q[k] * na.rhs[k];
  const StageEval nb = evaluate(grid_, b, t + 0.5 * dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs cc(n);
  for (std::size_t k = 0; k < n; ++k) cc[k] = c.e2[k] * a[k] + c.q[k] * (2.0 * nb.rhs[k] - nu.rhs[k]);
  const StageEval nc = evaluate(grid_, cc, t + dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);

  Coeffs next(n);
  for (std::size_t k = 0; k < n; ++k) {
    next[k] = c.e[k] * u[k] + c.f1[k] * nu.rhs[k] + 2.0 * c.f2[k] * (na.rhs[k] + nb.rhs[k]) + c.f3[k] * nc.rhs[k];
  }
  next[0] = u[0] + dt * (nu.rhs[0] + 2.0 * (na.rhs[0] + nb.rhs[0]) + nc.rhs[0]) / 6.0;
  next[0].imag(0.0);
  next.back() = 0.0;
  const double work = dt * (nu.power + 2.0 * na.power + 2.0 * nb.power + nc.power) / 6.0;
  return {Field(grid_, std::move(next)), work};
}

Stepper::Result Stepper::if_rk4(const Coefficients& c, const Field& u0, double t, const Forcing& forcing) const {
  const std::size_t n = c.e.size();
  const double dt = c.dt;
  Coeffs u(u0.coeffs().begin(), u0.coeffs().end());
  u.back() = 0.0;
  // Mode 0 has e = e2 = 1, so these formulas reduce to classical RK4 there.
  const StageEval k1 = evaluate(grid_, u, t, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs ua(n);
  for (std::size_t k = 0; k < n; ++k) ua[k] = c.e2[k] * (u[k] + 0.5 * dt * k1.rhs[k]);
  const StageEval k2 = evaluate(grid_, ua, t + 0.5 * dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs ub(n);
  for (std::size_t k = 0; k < n; ++k) ub[k] = c.e2[k] * u[k] + 0.5 * dt * k2.rhs[k];
  const StageEval k3 = evaluate(grid_, ub, t + 0.5 * dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs uc(n);
  for (std::size_t k = 0; k < n; ++k) uc[k] = c.e[k] * u[k] + dt * c.e2[k] * k3.rhs[k];
  const StageEval k4 = evaluate(grid_, uc, t + dt, forcing, cfg_.nonlinear, cfg_.dealias, shift_);
  Coeffs next(n);
  for (std::size_t k = 0; k < n; ++k) {
    next[k] = c.e[k] * u[k] +
              dt / 6.0 * (c.e[k] * k1.rhs[k] + 2.0 * c.e2[k] * (k2.rhs[k] + k3.rhs[k]) + k4.rhs[k]);
  }
  next[0].imag(0.0);
  next.back() = 0.0;
  const double work = dt * (k1.power + 2.0 * k2.power + 2.0 * k3.power + k4.power) / 6.0;
  return {Field(grid_, std::move(next)), work};
}

Field step(const Field& f, double t, const StepperConfig& cfg, const LinearSymbol& sym, const Forcing& forcing) {
  return Stepper(f.grid(), cfg, sym).advance(f, t, forcing).state;
}

TrajectoryRecord simulate(const Field& u0, double t_final, const StepperConfig& cfg, const LinearSymbol& sym,
                          const Forcing& forcing, const SimulateOptions& opts) {
  if (!(t_final > 0.0)) throw ParameterError("simulate: t_final must be > 0");
  if (opts.sample_every < 1) throw ParameterError("simulate: sample_every must be >= 1");
  cfg.validate();
  const auto n_steps = static_cast<long>(std::ceil(t_final / cfg.dt - 1e-9));
  StepperConfig local = cfg;
  local.dt = t_final / static_cast<double>(n_steps);
  std::vector<cplx> shift = opts.shift_schedule ? opts.shift_schedule(0.0, drop_nyquist(u0)) : opts.linear_shift;
  auto stepper = std::make_unique<const Stepper>(u0.grid(), local, sym, shift);

  TrajectoryRecord rec;
  rec.law = opts.law;
  rec.hs_index = opts.hs_index;
  Field u = drop_nyquist(u0);
  rec.initial_l2_sq = std::pow(l2_norm(mean_project(u)), 2);

  double work = 0.0;
  auto sample = [&](double t, const Field& state) {
    TrajectorySample s;
    s.t = t;
    s.mass = state.mean();
    const Field mf = mean_project(state);
    s.l2 = l2_norm(mf);
    s.hs = hs_norm(mf, opts.hs_index);
    s.control_effort = forcing ? l2_norm(forcing(state, t)) : 0.0;
    s.work = work;
    rec.samples.push_back(s);
    if (opts.store_fields) rec.fields.push_back(state);
  };

  sample(0.0, u);
  double prev_l2 = l2_norm(mean_project(u));
  for (long n = 0; n < n_steps; ++n) {
    const double t = n * local.dt;
    if (opts.shift_schedule && n > 0) {
      auto next = opts.shift_schedule(t, u);
      if (next != shift) {
        shift = std::move(next);
        stepper = std::make_unique<const Stepper>(u0.grid(), local, sym, shift);
      }
    }
    auto res = stepper->advance(u, t, forcing);
    const double t_next = (n + 1 == n_steps) ? t_final : (n + 1) * local.dt;
    const double l2 = l2_norm(mean_project(res.state));
    if (!finite_state(res.state.coeffs()) || !(l2 < 1e100)) {
      std::ostringstream msg;
      msg << "solution blew up at t = " << t_next;
      throw BlowUpError(msg.str(), t_next);
    }
    rec.max_step_increase = std::max(rec.max_step_increase, l2 - prev_l2);
    prev_l2 = l2;
    u = std::move(res.state);
    work += res.work;
    if (opts.on_step) opts.on_step(t_next, u);
    const bool stop = opts.stop_when && opts.stop_when(t_next, u);
    if ((n + 1) % opts.sample_every == 0 || n + 1 == n_steps || stop) sample(t_next, u);
    if (stop) break;
  }
  rec.final_state = u;
  return rec;
}

}  // namespace kdv
