#pragma once

#include <memory>
#include <vector>

#include "kdv/control_ops.hpp"
#include "kdv/dynamics.hpp"
#include "kdv/trajectory_io.hpp"

namespace kdv {

/// Uniformly sampled piece of an open-loop control h(x, t), t in [t0, t0 + (n-1) spacing].
struct ControlSegment {
  double t0 = 0.0;
  double spacing = 0.0;
  std::vector<Field> samples;

  double t_end() const { return t0 + spacing * static_cast<double>(samples.size() - 1); }
  /// Piecewise-cubic (4-point Lagrange) interpolation; exact at the nodes.
  Field at(double t) const;
};

/// Open-loop control (the pre-G input h) made of consecutive segments. The
/// control may jump between segments; replay integrates segment by segment.
class ControlSignal {
 public:
  explicit ControlSignal(SpectralGrid grid) : grid_(std::move(grid)) {}

  static ControlSignal zero(const SpectralGrid& grid, double duration, double spacing);

  void append(ControlSegment segment);
  const std::vector<ControlSegment>& segments() const { return segments_; }
  const SpectralGrid& grid() const { return grid_; }
  double duration() const;
  /// Value at t; at a junction the later segment wins.
  Field at(double t) const;
  /// (int ||h(t)||_0^2 dt)^{1/2} by the trapezoid rule on the samples.
  double l2_time_norm() const;
  /// Sample-wise sum; both signals must share the segment layout.
  ControlSignal operator+(const ControlSignal& other) const;
  ControlSignal scaled(double s) const;
  /// Largest sample norm max_t ||h(t)||_0.
  double max_norm() const;

  /// Keeps every stride-th sample of each segment; the result stays uniformly spaced.
  FieldDump to_dump(double mu, const std::string& config_json = {}, std::size_t stride = 1) const;
  static ControlSignal from_dump(const FieldDump& dump);

 private:
  SpectralGrid grid_;
  std::vector<ControlSegment> segments_;
};

struct SteeringProblem {
  Field u0;
  Field u1;
  double T = 1.0;
  double mu = 0.0;
  double tolerance = 1e-6;
  int max_picard = 30;

  void validate() const;
};

/// Everything the steering routines share: stepper, drift, control region and
/// the controllability Gramian for the local horizon.
struct SteeringMachinery {
  StepperConfig stepper;
  LinearSymbol symbol;
  std::shared_ptr<const ControlProfile> profile;
  std::shared_ptr<const OperatorMatrix> gramian;
  double smallness = 0.3;
  bool allow_regularization = true;

  /// Builds the Gramian for horizon T.
  static SteeringMachinery make(const StepperConfig& cfg, const LinearSymbol& sym, const ControlProfile& p,
                                double T);
  /// Sample spacing for a control of duration T: half the effective step.
  double sample_spacing(double T) const;
};

struct HumSolution {
  ControlSignal control;
  Field adjoint;                  // phi with G_T phi = v1 - W(T) v0
  double regularization = 0.0;    // Tikhonov shift used (0 = exact solve)
  double bias_bound = 0.0;        // ||regularization * phi||_0
};

/// Minimal-norm control of the linear system steering v0 to v1 in time T:
/// h(t) = G* W*(T - t) phi.
HumSolution hum_linear(const Field& v0, const Field& v1, double T, const OperatorMatrix& gramian,
                       const ControlProfile& p, const LinearSymbol& sym, double spacing,
                       bool allow_regularization = true);

/// Runs the open-loop system from u0 under G h(t), one segment after the other.
TrajectoryRecord replay(const Field& u0, const ControlSignal& control, const StepperConfig& cfg,
                        const LinearSymbol& sym, const ControlProfile& p, SimulateOptions opts = {});

struct LocalSteering {
  ControlSignal control;
  std::vector<double> residuals;  // ||w(T) - u1||_0 before each correction
  int iterations = 0;
  Field final_state;              // shifted variable
};

/// Small-data steering by Picard correction around the linear HUM control.
LocalSteering steer_local(const SteeringProblem& pb, const SteeringMachinery& m);

struct GlobalOptions {
  double epsilon = 0.1;
  double max_stage_time = 600.0;
};

struct StageReport {
  double t_stabilize_start = 0.0;  // stage A
  double t_connect = 0.0;          // stage C
  double t_stabilize_target = 0.0; // stage B (reversed)
  int picard_iterations = 0;
  double local_residual = 0.0;
  double replay_error = 0.0;
  double max_mass_drift = 0.0;
  double total_time() const { return t_stabilize_start + t_connect + t_stabilize_target; }
};

struct GlobalSteering {
  ControlSignal control;
  StageReport report;
  TrajectoryRecord replay;
};

/// Large-data steering: damp u0 to a small state, damp the reflected target
/// and reverse it in time, connect the two small states by steer_local.
GlobalSteering steer_global(const SteeringProblem& pb, const SteeringMachinery& m, const GlobalOptions& opts = {});

}  // namespace kdv
