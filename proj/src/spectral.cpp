#include "kdv/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "kdv/errors.hpp"

namespace kdv {

namespace detail {

struct FftPlans {
  int n = 0;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  explicit FftPlans(int size) : n(size) {
    std::vector<double> re(n);
    std::vector<fftw_complex> co(n / 2 + 1);
    // Planning is not thread-safe; execution with the new-array interface is.
    r2c = fftw_plan_dft_r2c_1d(n, re.data(), co.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    c2r = fftw_plan_dft_c2r_1d(n, co.data(), re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~FftPlans() {
    fftw_destroy_plan(r2c);
    fftw_destroy_plan(c2r);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
};

namespace {

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

std::shared_ptr<const FftPlans> plans_for(int n) {
  std::lock_guard lock(plan_mutex());
  static std::map<int, std::shared_ptr<const FftPlans>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto plans = std::make_shared<const FftPlans>(n);
  cache.emplace(n, plans);
  return plans;
}

}  // namespace
}  // namespace detail

SpectralGrid::SpectralGrid(int n_modes) : n_(n_modes) {
  if (n_modes < 8 || n_modes % 2 != 0) {
    throw ParameterError("grid size must be even and >= 8, got " + std::to_string(n_modes));
  }
  plans_ = detail::plans_for(n_modes);
}

int SpectralGrid::dealias_cutoff() const {
  // keep |k| < N/3
  return (n_ + 2) / 3;
}

double SpectralGrid::point(int j) const { return 2.0 * std::numbers::pi * j / n_; }

std::vector<double> SpectralGrid::points() const {
  std::vector<double> x(n_);
  for (int j = 0; j < n_; ++j) x[j] = point(j);
  return x;
}

void SpectralGrid::backward(std::span<const cplx> half_coeffs, std::span<double> samples) const {
  if (static_cast<int>(half_coeffs.size()) != half_size() || static_cast<int>(samples.size()) != n_) {
    throw DimensionError("backward transform: size mismatch");
  }
  // c2r overwrites its input
  std::vector<cplx> scratch(half_coeffs.begin(), half_coeffs.end());
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(scratch.data()), samples.data());
}

void SpectralGrid::forward(std::span<const double> samples, std::span<cplx> half_coeffs) const {
  if (static_cast<int>(half_coeffs.size()) != half_size() || static_cast<int>(samples.size()) != n_) {
    throw DimensionError("forward transform: size mismatch");
  }
  std::vector<double> scratch(samples.begin(), samples.end());
  fftw_execute_dft_r2c(plans_->r2c, scratch.data(), reinterpret_cast<fftw_complex*>(half_coeffs.data()));
  const double inv = 1.0 / n_;
  for (auto& c : half_coeffs) c *= inv;
}

Field::Field(SpectralGrid grid) : grid_(std::move(grid)), coeffs_(grid_.half_size(), cplx{}) {}

Field::Field(SpectralGrid grid, std::vector<cplx> half_coeffs)
    : grid_(std::move(grid)), coeffs_(std::move(half_coeffs)) {
  if (static_cast<int>(coeffs_.size()) != grid_.half_size()) {
    throw DimensionError("field: expected " + std::to_string(grid_.half_size()) + " coefficients, got " +
                         std::to_string(coeffs_.size()));
  }
  double scale = 0.0;
  for (const auto& c : coeffs_) scale = std::max(scale, std::abs(c));
  const double tol = 1e-13 * scale + 1e-300;
  for (cplx* c : {&coeffs_.front(), &coeffs_.back()}) {
    if (std::abs(c->imag()) > tol) {
      throw ParameterError("field: self-conjugate coefficient has an imaginary part");
    }
    *c = cplx(c->real(), 0.0);
  }
}

Field Field::from_physical(std::span<const double> samples, const SpectralGrid& grid) {
  if (static_cast<int>(samples.size()) != grid.size()) {
    throw DimensionError("from_physical: expected " + std::to_string(grid.size()) + " samples, got " +
                         std::to_string(samples.size()));
  }
  std::vector<cplx> c(grid.half_size());
  grid.forward(samples, c);
  c.front().imag(0.0);
  c.back().imag(0.0);
  return Field(grid, std::move(c));
}

Field Field::constant(double value, const SpectralGrid& grid) {
  std::vector<cplx> c(grid.half_size());
  c[0] = value;
  return Field(grid, std::move(c));
}

std::vector<double> Field::to_physical() const {
  std::vector<double> u(grid_.size());
  grid_.backward(coeffs_, u);
  return u;
}

cplx Field::coeff(int k) const {
  const int half = grid_.size() / 2;
  if (k > half || k < -half) return {};
  return k >= 0 ? coeffs_[k] : std::conj(coeffs_[-k]);
}

Field Field::operator+(const Field& other) const {
  check_same_grid(*this, other);
  std::vector<cplx> c(coeffs_);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += other.coeffs_[i];
  return Field(grid_, std::move(c));
}

Field Field::operator-(const Field& other) const {
  check_same_grid(*this, other);
  std::vector<cplx> c(coeffs_);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= other.coeffs_[i];
  return Field(grid_, std::move(c));
}

Field Field::operator-() const { return *this * -1.0; }

Field Field::operator*(double s) const {
  std::vector<cplx> c(coeffs_);
  for (auto& v : c) v *= s;
  return Field(grid_, std::move(c));
}

void check_same_grid(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) {
    throw DimensionError("fields live on different grids (" + std::to_string(a.grid().size()) + " vs " +
                         std::to_string(b.grid().size()) + ")");
  }
}

double inner(const Field& a, const Field& b) {
  check_same_grid(a, b);
  const auto ca = a.coeffs();
  const auto cb = b.coeffs();
  const std::size_t last = ca.size() - 1;
  double sum = (ca[0] * std::conj(cb[0])).real() + (ca[last] * std::conj(cb[last])).real();
  for (std::size_t k = 1; k < last; ++k) sum += 2.0 * (ca[k] * std::conj(cb[k])).real();
  return sum;
}

double hs_norm(const Field& f, double s) {
  const auto c = f.coeffs();
  const std::size_t last = c.size() - 1;
  double sum = 0.0;
  for (std::size_t k = 0; k <= last; ++k) {
    const double kk = static_cast<double>(k);
    const double w = s == 0.0 ? 1.0 : std::pow(1.0 + kk * kk, s);
    // Interior modes appear twice (k and -k).
    const double mult = (k == 0 || k == last) ? 1.0 : 2.0;
    sum += mult * w * std::norm(c[k]);
  }
  return std::sqrt(sum);
}

Field dr_apply(const Field& f, double r) {
  std::vector<cplx> c(f.coeffs().begin(), f.coeffs().end());
  for (std::size_t k = 1; k < c.size(); ++k) c[k] *= std::pow(static_cast<double>(k), r);
  return Field(f.grid(), std::move(c));
}

Field mean_project(const Field& f) {
  std::vector<cplx> c(f.coeffs().begin(), f.coeffs().end());
  c[0] = 0.0;
  return Field(f.grid(), std::move(c));
}

Field reflect(const Field& f) {
  std::vector<cplx> c(f.coeffs().begin(), f.coeffs().end());
  for (auto& v : c) v = std::conj(v);
  return Field(f.grid(), std::move(c));
}

Field drop_nyquist(const Field& f) {
  std::vector<cplx> c(f.coeffs().begin(), f.coeffs().end());
  c.back() = 0.0;
  return Field(f.grid(), std::move(c));
}

}  // namespace kdv
