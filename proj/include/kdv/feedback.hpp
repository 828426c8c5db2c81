#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>
#include <variant>

#include "kdv/control_ops.hpp"
#include "kdv/dynamics.hpp"

namespace kdv {

/// C-infinity transition psi(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)}),
/// clamped to 0 for x <= 0 and 1 for x >= 1.
double smoothstep(double x);

/// 2-periodic switching profile: 1 on [delta, 1-delta], 0 on [1, 2],
/// smooth monotone ramps in between. Requires 0 < delta < 1/10.
double theta(double t, double delta);

/// State cutoff: 1 for r <= r0, 0 for r >= 1, smooth nonincreasing between.
double rho(double r, double r0);

struct NoFeedback {};
struct Damping {};
struct GramianRate {
  std::shared_ptr<const OperatorMatrix> L;
};
struct TimeVarying {
  std::shared_ptr<const OperatorMatrix> L;
  double t_switch = 4.0;
  double delta_switch = 0.05;
  double r0 = 0.5;
  double s = 0.0;
};

/// Weights (a, b) with K = a K_lambda + b GG* for the time-varying law.
std::pair<double, double> time_varying_weights(const TimeVarying& tv, const Field& u, double t);

/// Which control law closes the loop, together with the operators it needs.
class FeedbackLaw {
 public:
  using Variant = std::variant<NoFeedback, Damping, GramianRate, TimeVarying>;

  static FeedbackLaw none(const ControlProfile& p);
  static FeedbackLaw damping(const ControlProfile& p);
  static FeedbackLaw gramian_rate(const ControlProfile& p, std::shared_ptr<const OperatorMatrix> L);
  static FeedbackLaw time_varying(const ControlProfile& p, std::shared_ptr<const OperatorMatrix> L,
                                  double t_switch = 4.0, double delta_switch = 0.05, double r0 = 0.5,
                                  double s = 0.0);

  const Variant& variant() const { return variant_; }
  const ControlProfile& profile() const { return *profile_; }
  /// "none", "damping", "gramian_rate" or "time_varying".
  std::string name() const;
  double lambda() const;

 private:
  FeedbackLaw(const ControlProfile& p, Variant v);

  std::shared_ptr<const ControlProfile> profile_;
  Variant variant_;
};

/// The control term -K(u, t) to add to the right-hand side.
Field eval_feedback(const FeedbackLaw& law, const Field& u, double t);

/// Empty for NoFeedback.
Forcing as_forcing(const FeedbackLaw& law);

/// Per-mode diagonal of the linear operator behind the law, as a stepper
/// shift (see Stepper). Damping uses GG*, the Gramian-rate law
/// GG* L_lambda^{-1}; empty for NoFeedback. The time-varying law gets GG*
/// here, and simulate() blends in the K_lambda diagonal step by step.
std::vector<cplx> diagonal_shift(const FeedbackLaw& law);

/// Closed-loop run of u_t + u_xxx + mu u_x + u u_x = -K(u, t). Uses
/// diagonal_shift(law) unless opts.linear_shift is already set.
TrajectoryRecord simulate(const Field& u0, double t_final, const StepperConfig& cfg, const LinearSymbol& sym,
                          const FeedbackLaw& law, SimulateOptions opts = {});

}  // namespace kdv
