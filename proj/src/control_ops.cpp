#include "kdv/control_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kdv/errors.hpp"
#include "kdv/kernels.hpp"

namespace kdv {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Signed distance from c to x on the circle, in (-pi, pi].
double circle_offset(double x, double c) {
  double d = std::fmod(x - c, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

}  // namespace

ControlProfile::ControlProfile(std::vector<double> g, const SpectralGrid& grid, double center, double width)
    : grid_(grid), g_(std::move(g)), weight_(grid), center_(center), width_(width) {
  if (static_cast<int>(g_.size()) != grid.size()) throw DimensionError("profile: sample count mismatch");
  double sum = 0.0;
  for (double v : g_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("profile: weights must be finite and nonnegative");
    sum += v;
  }
  if (!(sum > 0.0)) throw ParameterError("profile: weight vanishes on every grid point");
  const double scale = grid.size() / (kTwoPi * sum);
  for (double& v : g_) v *= scale;
  weight_ = Field::from_physical(g_, grid);
}

ControlProfile ControlProfile::bump(double center, double width, const SpectralGrid& grid) {
  if (!(width > 0.0) || width > kTwoPi * (1.0 + 1e-15)) {
    throw ParameterError("profile: width must lie in (0, 2*pi]");
  }
  std::vector<double> g(grid.size(), 0.0);
  const bool full = width >= kTwoPi * (1.0 - 1e-15);
  for (int j = 0; j < grid.size(); ++j) {
    const double d = circle_offset(grid.point(j), center);
    double y2;
    if (full) {
      // Smooth periodic map staying away from the singular endpoints.
      y2 = 0.5 * std::pow(std::sin(0.5 * d), 2);
    } else {
      const double y = 2.0 * d / width;
      y2 = y * y;
    }
    g[j] = y2 < 1.0 ? std::exp(-1.0 / (1.0 - y2)) : 0.0;
  }
  return ControlProfile(std::move(g), grid, center, width);
}

ControlProfile ControlProfile::from_samples(std::vector<double> g, const SpectralGrid& grid, double center,
                                            double width) {
  return ControlProfile(std::move(g), grid, center, width);
}

bool ControlProfile::is_even() const {
  const int n = grid_.size();
  const double scale = *std::max_element(g_.begin(), g_.end());
  for (int j = 1; j < n; ++j) {
    if (std::abs(g_[j] - g_[n - j]) > 1e-14 * scale) return false;
  }
  return true;
}

double weighted_integral(const ControlProfile& p, const Field& h) {
  if (!(p.grid() == h.grid())) throw DimensionError("control: profile and field grids differ");
  const auto hv = drop_nyquist(h).to_physical();
  double sum = 0.0;
  for (std::size_t j = 0; j < hv.size(); ++j) sum += p.samples()[j] * hv[j];
  return sum * kTwoPi / static_cast<double>(hv.size());
}

Field apply_G(const Field& h, const ControlProfile& p) {
  if (!(p.grid() == h.grid())) throw DimensionError("control: profile and field grids differ");
  const SpectralGrid& grid = h.grid();
  const auto hv = drop_nyquist(h).to_physical();
  const auto& g = p.samples();
  double c = 0.0;
  for (std::size_t j = 0; j < hv.size(); ++j) c += g[j] * hv[j];
  c *= kTwoPi / static_cast<double>(hv.size());
  std::vector<double> out(hv.size());
  double scale = 0.0;
  for (std::size_t j = 0; j < hv.size(); ++j) {
    out[j] = g[j] * (hv[j] - c);
    scale = std::max(scale, std::abs(out[j]));
  }
  std::vector<cplx> coeffs(grid.half_size());
  grid.forward(out, coeffs);
  if (std::abs(coeffs[0]) > 1e-12 * (scale + std::abs(c) + 1e-300)) {
    throw Error("apply_G: output mean is not zero; profile is not normalized");
  }
  coeffs[0] = 0.0;
  coeffs.back() = 0.0;
  return Field(grid, std::move(coeffs));
}

Field apply_Gstar(const Field& v, const ControlProfile& p) { return apply_G(v, p); }

int mode_dimension(const SpectralGrid& grid) { return 2 * grid.max_wavenumber(); }

int mode_index(int k, int max_wavenumber) { return k < 0 ? k + max_wavenumber : k + max_wavenumber - 1; }

int mode_wavenumber(int index, int max_wavenumber) {
  return index < max_wavenumber ? index - max_wavenumber : index - max_wavenumber + 1;
}

Eigen::VectorXcd to_mode_vector(const Field& f) {
  const int K = f.grid().max_wavenumber();
  Eigen::VectorXcd v(2 * K);
  for (int k = -K; k <= K; ++k) {
    if (k != 0) v[mode_index(k, K)] = f.coeff(k);
  }
  return v;
}

Field from_mode_vector(const Eigen::VectorXcd& v, const SpectralGrid& grid) {
  const int K = grid.max_wavenumber();
  if (v.size() != 2 * K) throw DimensionError("mode vector has wrong length for this grid");
  std::vector<cplx> c(grid.half_size(), 0.0);
  for (int k = 1; k <= K; ++k) c[k] = 0.5 * (v[mode_index(k, K)] + std::conj(v[mode_index(-k, K)]));
  return Field(grid, std::move(c));
}

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::GGstar:
      return "ggstar";
    case OperatorKind::LLambda:
      return "l_lambda";
    case OperatorKind::ControlGramian:
      return "control_gramian";
  }
  return "?";
}

OperatorKind operator_kind_from_string(const std::string& s) {
  if (s == "ggstar") return OperatorKind::GGstar;
  if (s == "l_lambda") return OperatorKind::LLambda;
  if (s == "control_gramian" || s == "gramian") return OperatorKind::ControlGramian;
  throw ParameterError("unknown operator kind '" + s + "'");
}

OperatorMatrix::OperatorMatrix(OperatorKind kind, int n_modes, double mu, double param, double horizon,
                               Eigen::MatrixXcd entries)
    : kind_(kind), n_modes_(n_modes), mu_(mu), param_(param), horizon_(horizon), entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() != 2 * (n_modes / 2 - 1)) {
    throw DimensionError("operator matrix: shape does not match grid size");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(entries_, Eigen::EigenvaluesOnly);
  min_eig_ = eig.eigenvalues().minCoeff();
  max_eig_ = eig.eigenvalues().maxCoeff();
  if (min_eig_ > 0.0) {
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXcd>>(entries_);
    if (llt->info() == Eigen::Success) llt_ = std::move(llt);
  }
}

double OperatorMatrix::condition() const {
  if (!(min_eig_ > 0.0)) return std::numeric_limits<double>::infinity();
  return max_eig_ / min_eig_;
}

void OperatorMatrix::check_grid(const Field& f) const {
  if (f.grid().size() != n_modes_) throw DimensionError("operator matrix: field grid does not match");
}

Field OperatorMatrix::apply(const Field& f) const {
  check_grid(f);
  return from_mode_vector(entries_ * to_mode_vector(f), f.grid());
}

Eigen::VectorXcd OperatorMatrix::solve(const Eigen::VectorXcd& rhs, double tikhonov) const {
  if (rhs.size() != entries_.rows()) throw DimensionError("operator solve: rhs length mismatch");
  if (tikhonov == 0.0) {
    if (!llt_) throw IllConditionedError("operator " + to_string(kind_) + " is not positive definite; cannot solve");
    return llt_->solve(rhs);
  }
  Eigen::MatrixXcd reg = entries_;
  reg.diagonal().array() += tikhonov;
  Eigen::LLT<Eigen::MatrixXcd> llt(reg);
  if (llt.info() != Eigen::Success) throw IllConditionedError("regularized operator solve failed");
  return llt.solve(rhs);
}

Field OperatorMatrix::solve(const Field& rhs) const {
  check_grid(rhs);
  return from_mode_vector(solve(to_mode_vector(rhs)), rhs.grid());
}

OperatorMatrix build_ggstar(const ControlProfile& p) {
  return OperatorMatrix(OperatorKind::GGstar, p.grid().size(), 0.0, 0.0, 0.0, kernels::assemble_ggstar(p));
}

OperatorMatrix build_L_lambda(const OperatorMatrix& ggstar, double lambda, const LinearSymbol& sym, double horizon) {
  if (ggstar.kind() != OperatorKind::GGstar) throw ParameterError("build_L_lambda: expected a GG* matrix");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("build_L_lambda: lambda must be >= 0");
  if (!(horizon > 0.0)) throw ParameterError("build_L_lambda: horizon must be > 0");
  return OperatorMatrix(OperatorKind::LLambda, ggstar.n_modes(), sym.mu(), lambda, horizon,
                        kernels::time_weighted(ggstar.entries(), sym, lambda, horizon, -1));
}

OperatorMatrix build_L_lambda(const ControlProfile& p, double lambda, const LinearSymbol& sym, double horizon) {
  return build_L_lambda(build_ggstar(p), lambda, sym, horizon);
}

OperatorMatrix build_control_gramian(const OperatorMatrix& ggstar, double T, const LinearSymbol& sym) {
  if (ggstar.kind() != OperatorKind::GGstar) throw ParameterError("build_control_gramian: expected a GG* matrix");
  if (!(T > 0.0) || !std::isfinite(T)) throw ParameterError("build_control_gramian: T must be > 0");
  return OperatorMatrix(OperatorKind::ControlGramian, ggstar.n_modes(), sym.mu(), T, T,
                        kernels::time_weighted(ggstar.entries(), sym, 0.0, T, +1));
}

OperatorMatrix build_control_gramian(const ControlProfile& p, double T, const LinearSymbol& sym) {
  return build_control_gramian(build_ggstar(p), T, sym);
}

Field apply_K_lambda(const Field& v, const OperatorMatrix& L, const ControlProfile& p) {
  if (L.kind() != OperatorKind::LLambda) throw ParameterError("apply_K_lambda: expected an L_lambda matrix");
  if (L.param() == 0.0) return apply_G(apply_Gstar(v, p), p);
  if (L.condition() > 1e14) {
    throw IllConditionedError(
        "L_lambda is numerically singular (condition > 1e14); use a wider control region, a smaller lambda, "
        "or a longer integration horizon");
  }
  const Field w = L.solve(mean_project(v));
  return apply_G(apply_Gstar(w, p), p);
}

cplx exponential_integral(cplx a, double horizon) {
  const cplx z = a * horizon;
  if (std::abs(a) < 1e-12) return horizon;
  if (std::abs(z) < 1e-3) {
    // Taylor series of (e^z - 1)/z.
    cplx term = 1.0, sum = 1.0;
    for (int n = 1; n < 12; ++n) {
      term *= z / double(n + 1);
      sum += term;
    }
    return horizon * sum;
  }
  const double x = z.real(), y = z.imag();
  const double s = std::sin(0.5 * y);
  const cplx em1(std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y));
  return em1 / a;
}

std::vector<ResonantPair> resonant_pairs(const LinearSymbol& sym, int max_k) {
  std::vector<ResonantPair> out;
  for (int k = -max_k; k <= max_k; ++k) {
    for (int l = -max_k; l <= max_k; ++l) {
      if (k == 0 || l == 0 || k == l) continue;
      if (sym.resonant(k, l)) out.push_back({k, l});
    }
  }
  return out;
}

int multiplicity(const LinearSymbol& sym, int l, int max_k) {
  int m = 0;
  for (int k = -max_k; k <= max_k; ++k) {
    if (k != 0 && sym.resonant(k, l)) ++m;
  }
  return m;
}

}  // namespace kdv
