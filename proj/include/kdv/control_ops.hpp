#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "kdv/dynamics.hpp"
#include "kdv/spectral.hpp"

namespace kdv {

/// Nonnegative control weight g with integral 1, supported on the arc
/// (center - width/2, center + width/2).
class ControlProfile {
 public:
  /// C-infinity bump exp(-1/(1-y^2)), y the affine map of the arc onto (-1, 1).
  /// width == 2 pi gives an everywhere-positive smooth profile instead.
  static ControlProfile bump(double center, double width, const SpectralGrid& grid);
  /// Arbitrary nonnegative samples; normalized so the trapezoid integral is 1.
  static ControlProfile from_samples(std::vector<double> g, const SpectralGrid& grid, double center = 0.0,
                                     double width = 0.0);

  const SpectralGrid& grid() const { return grid_; }
  const std::vector<double>& samples() const { return g_; }
  const Field& weight() const { return weight_; }
  double center() const { return center_; }
  double width() const { return width_; }
  /// g(-x) == g(x) on the grid.
  bool is_even() const;

 private:
  ControlProfile(std::vector<double> g, const SpectralGrid& grid, double center, double width);

  SpectralGrid grid_;
  std::vector<double> g_;
  Field weight_;
  double center_;
  double width_;
};

/// Trapezoid quadrature of g*h over the torus.
double weighted_integral(const ControlProfile& p, const Field& h);

/// [Gh](x) = g(x) (h(x) - int g h). The output has zero mean and no Nyquist mode.
Field apply_G(const Field& h, const ControlProfile& p);
/// G is self-adjoint, so this is apply_G.
Field apply_Gstar(const Field& v, const ControlProfile& p);

// Mean-zero truncated basis: wavenumbers -K..-1, 1..K with K = N/2 - 1.
int mode_dimension(const SpectralGrid& grid);
int mode_index(int k, int max_wavenumber);
int mode_wavenumber(int index, int max_wavenumber);
Eigen::VectorXcd to_mode_vector(const Field& f);
/// Real field from a mode vector; the +k and conj(-k) entries are averaged.
Field from_mode_vector(const Eigen::VectorXcd& v, const SpectralGrid& grid);

enum class OperatorKind { GGstar, LLambda, ControlGramian };
std::string to_string(OperatorKind kind);
OperatorKind operator_kind_from_string(const std::string& s);

/// Dense Hermitian operator on the truncated mean-zero Fourier basis.
///
/// Immutable after construction. The spectrum extremes and, for positive
/// definite matrices, a Cholesky factorization are computed once up front.
class OperatorMatrix {
 public:
  OperatorMatrix(OperatorKind kind, int n_modes, double mu, double param, double horizon, Eigen::MatrixXcd entries);

  OperatorKind kind() const { return kind_; }
  int n_modes() const { return n_modes_; }
  double mu() const { return mu_; }
  /// lambda for LLambda, T for ControlGramian, 0 for GGstar.
  double param() const { return param_; }
  /// Integration horizon of LLambda (1 by default); equals T for ControlGramian.
  double horizon() const { return horizon_; }
  const Eigen::MatrixXcd& entries() const { return entries_; }
  int dimension() const { return static_cast<int>(entries_.rows()); }

  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }
  double condition() const;
  bool positive_definite() const { return min_eig_ > 0.0; }

  Field apply(const Field& f) const;
  /// Solves (A + tikhonov I) x = rhs.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs, double tikhonov = 0.0) const;
  Field solve(const Field& rhs) const;

 private:
  void check_grid(const Field& f) const;

  OperatorKind kind_;
  int n_modes_;
  double mu_;
  double param_;
  double horizon_;
  Eigen::MatrixXcd entries_;
  double min_eig_ = 0.0;
  double max_eig_ = 0.0;
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXcd>> llt_;
};

/// Matrix of GG* assembled column by column from the matrix-free operator.
OperatorMatrix build_ggstar(const ControlProfile& p);

/// L_lambda = int_0^H e^{-2 lambda tau} W(-tau) GG* W*(-tau) dtau in closed form.
OperatorMatrix build_L_lambda(const OperatorMatrix& ggstar, double lambda, const LinearSymbol& sym,
                              double horizon = 1.0);
OperatorMatrix build_L_lambda(const ControlProfile& p, double lambda, const LinearSymbol& sym, double horizon = 1.0);

/// G_T = int_0^T W(s) GG* W*(s) ds in closed form.
OperatorMatrix build_control_gramian(const OperatorMatrix& ggstar, double T, const LinearSymbol& sym);
OperatorMatrix build_control_gramian(const ControlProfile& p, double T, const LinearSymbol& sym);

/// K_lambda v = GG* L_lambda^{-1} v; for lambda = 0 this is GG* v.
Field apply_K_lambda(const Field& v, const OperatorMatrix& L, const ControlProfile& p);

/// Closed form of int_0^H e^{a s} ds, accurate for small |a|.
cplx exponential_integral(cplx a, double horizon);

struct ResonantPair {
  int k;
  int l;
};
/// Pairs k != l, 0 < |k|,|l| <= max_k, with omega_k == omega_l.
std::vector<ResonantPair> resonant_pairs(const LinearSymbol& sym, int max_k);
/// #{k : 0 < |k| <= max_k, omega_k == omega_l}.
int multiplicity(const LinearSymbol& sym, int l, int max_k);

// Operator persistence: JSON or a little-endian binary with the same header
// (N, mu, kind, lambda or T, horizon) followed by row-major complex entries.
void write_operator_json(std::ostream& out, const OperatorMatrix& op);
void write_operator_binary(std::ostream& out, const OperatorMatrix& op);
OperatorMatrix read_operator(std::istream& in);

}  // namespace kdv
