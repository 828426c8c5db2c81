#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdv/spectral.hpp"

namespace kdv {

/// Dispersion relation of u_t + u_xxx + mu u_x = 0: mode k rotates as
/// e^{i omega_k t} with omega_k = k^3 - mu k.
///
/// When mu is rational (p/q with q <= 10^6) equal frequencies are detected
/// by exact integer arithmetic.
class LinearSymbol {
 public:
  explicit LinearSymbol(double mu = 0.0);
  static LinearSymbol rational(std::int64_t p, std::int64_t q);

  double mu() const { return mu_; }
  double omega(int k) const;
  std::optional<std::pair<std::int64_t, std::int64_t>> rational_mu() const { return rational_; }

  /// omega_k == omega_l, exactly when mu is rational.
  bool resonant(int k, int l) const;

 private:
  double mu_;
  std::optional<std::pair<std::int64_t, std::int64_t>> rational_;
};

enum class Scheme { ExponentialRK4, IntegratingFactorRK4 };

struct StepperConfig {
  double dt = 5e-4;
  Scheme scheme = Scheme::ExponentialRK4;
  bool dealias = true;
  // Off gives the linear forced equation v_t + v_xxx + mu v_x = f.
  bool nonlinear = true;

  void validate() const;
};

/// Exact linear group W(t): c_k -> e^{i omega_k t} c_k. Acts on |k| <= N/2-1;
/// the Nyquist coefficient is dropped.
Field w_propagate(const Field& f, double t, const LinearSymbol& sym);

/// -(1/2) d/dx (u^2), pseudospectral, with the 2/3 rule when dealias is set.
Field nonlinear_rhs(const Field& f, bool dealias = true);

/// Right-hand-side source term F(u, t) added to the KdV equation.
using Forcing = std::function<Field(const Field& u, double t)>;

/// Fourth-order exponential time stepper for
///   u_t + u_xxx + mu u_x + u u_x = F(u, t).
///
/// Besides advancing the state it integrates the energy input
/// d/dt W = 2 <u, F(u,t)> with the same stage values, so that
/// ||u(t)||^2 - ||u(0)||^2 - W(t) measures the time discretization error.
///
/// A per-mode shift d_k (half spectrum, d_0 = 0) moves the linear part of a
/// feedback term into the exponential: the stepper integrates with symbol
/// i omega_k - d_k and adds d_k u_k back to the explicit part, so the
/// equation is unchanged. With the diagonal of a linear feedback operator
/// this keeps the fast high modes stable at large omega_k dt.
class Stepper {
 public:
  Stepper(const SpectralGrid& grid, const StepperConfig& cfg, const LinearSymbol& sym,
          std::vector<cplx> linear_shift = {});

  struct Result {
    Field state;
    double work;  // increment of W over the step
  };

  Result advance(const Field& u, double t, const Forcing& forcing) const;
  Result advance(const Field& u, double t, const Forcing& forcing, double dt) const;

  const StepperConfig& config() const { return cfg_; }
  const LinearSymbol& symbol() const { return sym_; }
  const SpectralGrid& grid() const { return grid_; }

 private:
  struct Coefficients {
    double dt;
    std::vector<cplx> e, e2, q, f1, f2, f3;
  };
  Coefficients make_coefficients(double dt) const;
  Result advance_with(const Coefficients& c, const Field& u, double t, const Forcing& forcing) const;
  Result exp_rk4(const Coefficients& c, const Field& u, double t, const Forcing& forcing) const;
  Result if_rk4(const Coefficients& c, const Field& u, double t, const Forcing& forcing) const;

  SpectralGrid grid_;
  StepperConfig cfg_;
  LinearSymbol sym_;
  std::vector<cplx> shift_;
  Coefficients default_;
};

/// One step of the forced equation from time t.
Field step(const Field& f, double t, const StepperConfig& cfg, const LinearSymbol& sym, const Forcing& forcing);

struct TrajectorySample {
  double t = 0.0;
  double mass = 0.0;            // [u]
  double l2 = 0.0;              // ||u - [u]||_0
  double hs = 0.0;              // ||u - [u]||_s
  double control_effort = 0.0;  // ||F(u, t)||_0
  double work = 0.0;            // int_0^t 2 <u, F> dt
};

struct TrajectoryRecord {
  std::string law = "none";
  double hs_index = 1.0;
  double initial_l2_sq = 0.0;
  // Largest single-step growth of ||u - [u]||_0 over the whole run.
  double max_step_increase = 0.0;
  std::vector<TrajectorySample> samples;
  std::vector<Field> fields;  // filled when SimulateOptions::store_fields
  std::optional<Field> final_state;
};

struct SimulateOptions {
  int sample_every = 100;
  double hs_index = 1.0;
  bool store_fields = false;
  std::string law = "none";
  // Per-step callback (after each accepted step), e.g. for recording.
  std::function<void(double t, const Field& u)> on_step;
  // Stop early once this returns true (checked after each step).
  std::function<bool(double t, const Field& u)> stop_when;
  // Passed to the Stepper; see there.
  std::vector<cplx> linear_shift;
  // When set, overrides linear_shift from the state at the start of each
  // step. Coefficients are rebuilt only when the returned shift changes.
  std::function<std::vector<cplx>(double t, const Field& u)> shift_schedule;
};

/// Integrates from u0 over [0, t_final]. The step is adjusted down to
/// t_final / ceil(t_final / dt) so the horizon is hit exactly.
TrajectoryRecord simulate(const Field& u0, double t_final, const StepperConfig& cfg, const LinearSymbol& sym,
                          const Forcing& forcing, const SimulateOptions& opts = {});

/// I2 = ||u||_0^2 including the mean, in coefficient normalization.
inline double energy(const Field& u) { return inner(u, u); }

}  // namespace kdv
