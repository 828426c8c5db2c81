#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace kdv {

using cplx = std::complex<double>;

namespace detail {
struct FftPlans;
}

/// Uniform collocation grid on [0, 2*pi) with N points, N even and >= 8.
///
/// Resolved wavenumbers are k = -N/2 .. N/2-1. Real fields are stored by their
/// non-negative half spectrum k = 0 .. N/2; negative wavenumbers follow from
/// Hermitian symmetry. Grids are cheap to copy; FFT plans are shared.
class SpectralGrid {
 public:
  explicit SpectralGrid(int n_modes);

  int size() const { return n_; }
  /// Number of stored half-spectrum coefficients (N/2 + 1).
  int half_size() const { return n_ / 2 + 1; }
  /// Largest wavenumber kept by linear operators (N/2 - 1).
  int max_wavenumber() const { return n_ / 2 - 1; }
  /// Upper bound (exclusive) on |k| kept by the 2/3 dealiasing rule.
  int dealias_cutoff() const;

  double point(int j) const;
  std::vector<double> points() const;

  // Unnormalized inverse transform: samples[j] = sum_k c_k e^{i k x_j}.
  void backward(std::span<const cplx> half_coeffs, std::span<double> samples) const;
  // Normalized forward transform: c_k = (1/N) sum_j samples[j] e^{-i k x_j}.
  void forward(std::span<const double> samples, std::span<cplx> half_coeffs) const;

  friend bool operator==(const SpectralGrid& a, const SpectralGrid& b) { return a.n_ == b.n_; }

 private:
  int n_;
  std::shared_ptr<const detail::FftPlans> plans_;
};

/// A real periodic function u(x) = sum_k c_k e^{ikx} on a SpectralGrid.
///
/// The stored half spectrum always satisfies Im c_0 = 0 and Im c_{N/2} = 0,
/// which together with implicit c_{-k} = conj(c_k) keeps the field real.
/// Values are immutable after construction.
class Field {
 public:
  explicit Field(SpectralGrid grid);
  Field(SpectralGrid grid, std::vector<cplx> half_coeffs);

  static Field from_physical(std::span<const double> samples, const SpectralGrid& grid);
  static Field constant(double value, const SpectralGrid& grid);

  std::vector<double> to_physical() const;

  const SpectralGrid& grid() const { return grid_; }
  std::span<const cplx> coeffs() const { return coeffs_; }
  /// Coefficient for any wavenumber |k| <= N/2; zero outside.
  cplx coeff(int k) const;
  double mean() const { return coeffs_[0].real(); }

  Field operator+(const Field& other) const;
  Field operator-(const Field& other) const;
  Field operator-() const;
  Field operator*(double s) const;
  friend Field operator*(double s, const Field& f) { return f * s; }

 private:
  SpectralGrid grid_;
  std::vector<cplx> coeffs_;
};

/// Coefficient-space inner product sum_k a_k conj(b_k) over all resolved k.
double inner(const Field& a, const Field& b);

/// Sobolev norm (sum_k <k>^{2s} |c_k|^2)^{1/2} with <k> = sqrt(1 + k^2).
double hs_norm(const Field& f, double s);

inline double l2_norm(const Field& f) { return hs_norm(f, 0.0); }

/// Fractional derivative: c_k -> |k|^r c_k for k != 0, mean untouched.
Field dr_apply(const Field& f, double r);

/// Removes the mean: c_0 -> 0.
Field mean_project(const Field& f);

/// Reflection (Rf)(x) = f(-x), i.e. c_k -> c_{-k} = conj(c_k).
Field reflect(const Field& f);

/// Zeroes the Nyquist coefficient k = N/2.
Field drop_nyquist(const Field& f);

void check_same_grid(const Field& a, const Field& b);

}  // namespace kdv
