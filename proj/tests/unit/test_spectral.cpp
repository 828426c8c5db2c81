#include <doctest.h>

#include <cmath>

#include "kdv/errors.hpp"
#include "kdv/spectral.hpp"
#include "../support/testing.hpp"

using namespace kdv;
using kdv::testing::kPi;

namespace {

std::vector<double> random_samples(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("forward transform matches the direct DFT") {
  for (int n : {8, 16, 64, 256}) {
    SpectralGrid g(n);
    const auto u = random_samples(n, n);
    const Field f = Field::from_physical(u, g);
    const auto ref = testing::brute_dft(u);
    double worst = 0.0;
    for (int k = 0; k <= n / 2 - 1; ++k) worst = std::max(worst, std::abs(f.coeff(k) - ref[k + n / 2]));
    for (int k = 1; k <= n / 2 - 1; ++k) worst = std::max(worst, std::abs(f.coeff(-k) - ref[-k + n / 2]));
    CHECK(worst <= 1e-14);
    // The Nyquist mode is stored as the real c_{-N/2}.
    CHECK(std::abs(f.coeff(n / 2) - ref[0]) <= 1e-14);
  }
}

TEST_CASE("physical round trip") {
  for (int n : {8, 16, 64, 256}) {
    SpectralGrid g(n);
    const auto u = random_samples(n, 100 + n);
    const auto back = Field::from_physical(u, g).to_physical();
    double worst = 0.0;
    for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(back[j] - u[j]));
    CHECK(worst <= 1e-13);
  }
}

TEST_CASE("backward transform matches direct synthesis") {
  SpectralGrid g(32);
  const Field f = testing::random_field(g, 15, 3, 2.0, 0.4);
  std::vector<cplx> full(32, 0.0);
  for (int k = -15; k <= 15; ++k) full[k + 16] = f.coeff(k);
  const auto ref = testing::brute_synthesis(full);
  const auto u = f.to_physical();
  for (int j = 0; j < 32; ++j) CHECK(u[j] == doctest::Approx(ref[j]).epsilon(1e-13));
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(SpectralGrid(7), ParameterError);
  CHECK_THROWS_AS(SpectralGrid(6), ParameterError);
  SpectralGrid g(12);
  CHECK(g.half_size() == 7);
  CHECK(g.max_wavenumber() == 5);
  CHECK(g.point(3) == doctest::Approx(2 * kPi * 3 / 12));
}

TEST_CASE("Sobolev norms of simple fields") {
  SpectralGrid g(64);
  std::vector<double> u(64);
  for (int j = 0; j < 64; ++j) u[j] = std::cos(g.point(j));
  const Field c = Field::from_physical(u, g);
  // cos x has c_{+-1} = 1/2 and <1>^2 = 2.
  CHECK(hs_norm(c, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l2_norm(c) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(hs_norm(Field::constant(3.0, g), 2.0) == doctest::Approx(3.0));
  CHECK(inner(c, c) == doctest::Approx(0.5));
}

TEST_CASE("fractional derivative and projections") {
  SpectralGrid g(32);
  const Field f = testing::random_field(g, 10, 9, 1.0, 0.7);
  const Field d = dr_apply(f, 1.5);
  for (int k = 1; k <= 10; ++k) CHECK(std::abs(d.coeff(k) - std::pow(k, 1.5) * f.coeff(k)) <= 1e-13);
  CHECK(d.mean() == doctest::Approx(0.7));
  const Field m = mean_project(f);
  CHECK(m.mean() == 0.0);
  CHECK(m.coeff(3) == f.coeff(3));
}

TEST_CASE("reflection is x -> -x") {
  SpectralGrid g(32);
  const Field f = testing::random_field(g, 12, 4);
  const auto u = f.to_physical();
  const auto r = reflect(f).to_physical();
  for (int j = 0; j < 32; ++j) CHECK(r[j] == doctest::Approx(u[(32 - j) % 32]).epsilon(1e-12));
}

TEST_CASE("field arithmetic requires a common grid") {
  SpectralGrid a(16), b(32);
  CHECK_THROWS_AS(Field(a) + Field(b), DimensionError);
  CHECK_THROWS_AS(Field(a, std::vector<cplx>(3)), DimensionError);
}
