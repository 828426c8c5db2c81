#pragma once

#include <optional>
#include <string>
#include <utility>

#include "kdv/control_ops.hpp"
#include "kdv/dynamics.hpp"

namespace kdv {

/// Least-squares exponential fit log||u(t)||_s ~ intercept - rate * t.
struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  double residual = 0.0;  // RMS of the log-linear fit
  double norm_index = 0.0;
  int samples = 0;
  bool truncated = false;  // window cut short at the noise floor
};

/// Norms below this are treated as floating-point noise by fit_decay.
inline constexpr double kNoiseFloor = 1e-14;

/// Fits samples with t in [t_start, t_end]. s must be 0 (the l2 column) or the
/// record's hs_index. Needs at least 10 usable samples.
DecayFit fit_decay(const TrajectoryRecord& rec, double s, double t_start, double t_end);

/// Default window: drop the first 20% of the horizon.
DecayFit fit_decay(const TrajectoryRecord& rec, double s);

/// max_t | ||u(t)||^2 - ||u0||^2 + 2 int_0^t ||G* u||^2 | / ||u0||^2 for a
/// damping run (zero when u0 = 0).
double energy_residual(const TrajectoryRecord& rec);

/// Smallest eigenvalue of the Gramian restricted to modes 0 < |k| <= band.
double observability_constant(const OperatorMatrix& gramian, int band);

/// Largest |I2(t) - I2(0)| / I2(0) over the samples, I2 = ||u||_0^2 with mean.
double energy_drift(const TrajectoryRecord& rec);

/// Largest |[u](t) - [u](0)| over the samples.
double mass_drift(const TrajectoryRecord& rec);

}  // namespace kdv
