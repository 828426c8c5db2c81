#include "kdv/kernels.hpp"

#include <omp.h>

#include <cmath>

#include "kdv/errors.hpp"

namespace kdv::kernels {

namespace {

// G G* applied to cos(lx) and sin(lx); column l of the complex matrix follows.
void fill_column_pair(const ControlProfile& p, int l, Eigen::MatrixXcd& out) {
  const SpectralGrid& grid = p.grid();
  const int K = grid.max_wavenumber();
  std::vector<cplx> c(grid.half_size(), 0.0);
  c[l] = 0.5;
  const Field cos_l(grid, c);
  c[l] = cplx(0.0, -0.5);
  const Field sin_l(grid, c);
  const Field a = apply_G(apply_Gstar(cos_l, p), p);
  const Field b = apply_G(apply_Gstar(sin_l, p), p);
  const int plus = mode_index(l, K), minus = mode_index(-l, K);
  for (int k = -K; k <= K; ++k) {
    if (k == 0) continue;
    const cplx ak = a.coeff(k), bk = b.coeff(k);
    out(mode_index(k, K), plus) = ak + cplx(0.0, 1.0) * bk;
    out(mode_index(k, K), minus) = ak - cplx(0.0, 1.0) * bk;
  }
}

cplx time_weight(const LinearSymbol& sym, int k, int l, double decay, double horizon, int sign) {
  double delta = 0.0;
  if (!sym.resonant(k, l)) {
    delta = sign * (sym.omega(k) - sym.omega(l));
    // irrational drift: near-coincident frequencies take the resonant value
    if (std::abs(delta) < 1e-12 * horizon) delta = 0.0;
  }
  return exponential_integral(cplx(-2.0 * decay, delta), horizon);
}

Field adjoint_sample(const Field& phi, double t, double T, const ControlProfile& p, const LinearSymbol& sym) {
  return apply_G(w_propagate(phi, t - T, sym), p);
}

}  // namespace

Eigen::MatrixXcd assemble_ggstar(const ControlProfile& p) {
  const int K = p.grid().max_wavenumber();
  Eigen::MatrixXcd m(2 * K, 2 * K);
#pragma omp parallel for schedule(dynamic)
  for (int l = 1; l <= K; ++l) fill_column_pair(p, l, m);
  return m;
}

Eigen::MatrixXcd time_weighted(const Eigen::MatrixXcd& base, const LinearSymbol& sym, double decay,
                               double horizon, int sign) {
  const int dim = static_cast<int>(base.rows());
  const int K = dim / 2;
  Eigen::MatrixXcd out(dim, dim);
#pragma omp parallel for
  for (int col = 0; col < dim; ++col) {
    const int l = mode_wavenumber(col, K);
    for (int row = 0; row < dim; ++row) {
      out(row, col) = base(row, col) * time_weight(sym, mode_wavenumber(row, K), l, decay, horizon, sign);
    }
  }
  return out;
}

std::vector<Field> sample_adjoint_control(const Field& phi, std::span<const double> times, double T,
                                          const ControlProfile& p, const LinearSymbol& sym) {
  std::vector<Field> out(times.size(), Field(phi.grid()));
  const auto n = static_cast<long>(times.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = adjoint_sample(phi, times[i], T, p, sym);
  return out;
}

namespace serial {

Eigen::MatrixXcd assemble_ggstar(const ControlProfile& p) {
  const int K = p.grid().max_wavenumber();
  Eigen::MatrixXcd m(2 * K, 2 * K);
  for (int l = 1; l <= K; ++l) fill_column_pair(p, l, m);
  return m;
}

Eigen::MatrixXcd time_weighted(const Eigen::MatrixXcd& base, const LinearSymbol& sym, double decay,
                               double horizon, int sign) {
  const int dim = static_cast<int>(base.rows());
  const int K = dim / 2;
  Eigen::MatrixXcd out(dim, dim);
  for (int col = 0; col < dim; ++col) {
    for (int row = 0; row < dim; ++row) {
      out(row, col) = base(row, col) *
                      time_weight(sym, mode_wavenumber(row, K), mode_wavenumber(col, K), decay, horizon, sign);
    }
  }
  return out;
}

std::vector<Field> sample_adjoint_control(const Field& phi, std::span<const double> times, double T,
                                          const ControlProfile& p, const LinearSymbol& sym) {
  std::vector<Field> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(adjoint_sample(phi, t, T, p, sym));
  return out;
}

}  // namespace serial
}  // namespace kdv::kernels
