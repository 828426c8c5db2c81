#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kdv/control_ops.hpp"
#include "kdv/errors.hpp"
#include "kdv/kernels.hpp"
#include "../support/testing.hpp"

using namespace kdv;
using kdv::testing::kPi;
using kdv::testing::random_field;

namespace {

ControlProfile default_profile(const SpectralGrid& g) { return ControlProfile::bump(kPi, kPi / 2, g); }

// int_a^b e^{-2 lambda tau} W(-sign tau) GG* W(sign tau) phi dtau by Simpson, matrix-free.
Field quadrature(const Field& phi, const ControlProfile& p, const LinearSymbol& sym, double lambda, double horizon,
                 int sign, int panels) {
  const SpectralGrid& g = phi.grid();
  const double h = horizon / panels;
  std::vector<cplx> acc(g.half_size(), 0.0);
  for (int i = 0; i <= panels; ++i) {
    const double tau = i * h;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const Field v = w_propagate(apply_G(apply_Gstar(w_propagate(phi, sign * tau, sym), p), p), -sign * tau, sym);
    const double scale = w * h / 3.0 * std::exp(-2.0 * lambda * tau);
    for (int k = 0; k < g.half_size(); ++k) acc[k] += scale * v.coeffs()[k];
  }
  return Field(g, acc);
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("bump profile is normalized and localized") {
  SpectralGrid g(128);
  const auto p = default_profile(g);
  double integral = 0.0;
  for (double v : p.samples()) integral += v * 2 * kPi / 128;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p.samples()[0] <= 1e-14);
  CHECK(p.samples()[64] > 0.0);
  for (int j = 0; j < 128; ++j) {
    if (std::abs(g.point(j) - kPi) >= kPi / 4) CHECK(p.samples()[j] == 0.0);
  }
  CHECK(p.is_even());
  CHECK(!ControlProfile::bump(1.0, kPi / 2, g).is_even());
  CHECK_THROWS_AS(ControlProfile::bump(kPi, 0.0, g), ParameterError);
  CHECK_THROWS_AS(ControlProfile::bump(kPi, 7.0, g), ParameterError);
  const auto full = ControlProfile::bump(kPi, 2 * kPi, g);
  for (double v : full.samples()) CHECK(v > 0.0);
}

TEST_CASE("uniform weight gives G h = (h - [h]) / 2 pi") {
  SpectralGrid g(32);
  const auto p = ControlProfile::from_samples(std::vector<double>(32, 3.0), g);
  const Field h = random_field(g, 15, 1, 1.0, 0.8);
  const Field gh = apply_G(h, p);
  CHECK(l2_norm(gh - mean_project(h) * (1.0 / (2 * kPi))) <= 1e-15);
  CHECK(weighted_integral(p, h) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("G is self-adjoint and mean-free") {
  SpectralGrid g(64);
  const auto p = default_profile(g);
  for (int seed = 1; seed <= 5; ++seed) {
    const Field h = random_field(g, 31, seed, 1.0, 0.3);
    const Field v = random_field(g, 31, seed + 50, 1.0, -0.2);
    CHECK(std::abs(inner(apply_G(h, p), v) - inner(h, apply_Gstar(v, p))) <= 1e-15);
    CHECK(apply_G(h, p).mean() == 0.0);
  }
}

TEST_CASE("GG* is Hermitian positive semidefinite and matches the matrix-free operator") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const auto gg = build_ggstar(p);
  CHECK(max_abs(gg.entries() - gg.entries().adjoint()) <= 1e-15);
  CHECK(gg.min_eigenvalue() >= -1e-15);
  for (int seed = 1; seed <= 4; ++seed) {
    const Field phi = random_field(g, 15, seed);
    const Field direct = apply_G(apply_Gstar(phi, p), p);
    CHECK(l2_norm(gg.apply(phi) - direct) <= 1e-15);
    // <GG* phi, phi> = ||G* phi||^2
    const double q = std::pow(l2_norm(apply_Gstar(phi, p)), 2);
    const auto v = to_mode_vector(phi);
    CHECK(std::abs((v.adjoint() * gg.entries() * v)(0, 0).real() - q) <= 1e-15);
  }
}

TEST_CASE("mode vectors round trip") {
  SpectralGrid g(16);
  const Field f = random_field(g, 7, 3);
  CHECK(l2_norm(from_mode_vector(to_mode_vector(f), g) - f) == 0.0);
  for (int k = -7; k <= 7; ++k) {
    if (k != 0) CHECK(mode_wavenumber(mode_index(k, 7), 7) == k);
  }
  CHECK_THROWS_AS(from_mode_vector(Eigen::VectorXcd(3), g), DimensionError);
}

TEST_CASE("L_lambda matches matrix-free quadrature") {
  SpectralGrid g(16);
  const auto p = default_profile(g);
  for (double mu : {0.0, 0.7}) {
    const LinearSymbol sym(mu);
    for (double lambda : {0.5, 2.0}) {
      const auto L = build_L_lambda(p, lambda, sym);
      CHECK(L.kind() == OperatorKind::LLambda);
      CHECK(L.positive_definite());
      CHECK(max_abs(L.entries() - L.entries().adjoint()) <= 1e-15);
      const Field phi = random_field(g, 7, 11);
      const Field ref = quadrature(phi, p, sym, lambda, 1.0, 1, 200000);
      CHECK(l2_norm(L.apply(phi) - ref) <= 1e-10);
      CHECK(l2_norm(L.solve(L.apply(phi)) - phi) <= 1e-9);
    }
  }
}

TEST_CASE("control Gramian matches time quadrature") {
  SpectralGrid g(16);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.0);
  const auto G = build_control_gramian(p, 1.0, sym);
  CHECK(G.kind() == OperatorKind::ControlGramian);
  CHECK(G.horizon() == 1.0);
  const Field phi = random_field(g, 7, 12);
  // G_T = int_0^T W(s) GG* W(-s) ds
  const Field ref = quadrature(phi, p, sym, 0.0, 1.0, -1, 100000);
  CHECK(l2_norm(G.apply(phi) - ref) <= 1e-8);
}

TEST_CASE("Gramian grows with the horizon") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.2);
  const auto g1 = build_control_gramian(p, 1.0, sym);
  const auto g2 = build_control_gramian(p, 2.0, sym);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g2.entries() - g1.entries());
  CHECK(es.eigenvalues().minCoeff() >= -1e-13);
  CHECK(g2.min_eigenvalue() >= g1.min_eigenvalue());
}

TEST_CASE("resonant pairs agree with brute force") {
  for (std::int64_t p : {0, 7, 13, 21}) {
    const auto sym = LinearSymbol::rational(p, 1);
    const int K = 12;
    int brute = 0;
    for (int k = -K; k <= K; ++k) {
      for (int l = -K; l <= K; ++l) {
        if (k == 0 || l == 0 || k == l) continue;
        brute += (std::int64_t(k) * k * k - p * k) == (std::int64_t(l) * l * l - p * l);
      }
    }
    CHECK(static_cast<int>(resonant_pairs(sym, K).size()) == brute);
    for (int l = 1; l <= K; ++l) CHECK(multiplicity(sym, l, K) <= 3);
  }
  // k^3 - 7k: omega_1 = omega_2 = omega_{-3} = -6
  CHECK(multiplicity(LinearSymbol::rational(7, 1), 1, 10) == 3);
}

TEST_CASE("L_lambda at a resonant drift") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const auto sym = LinearSymbol::rational(7, 1);
  const auto L = build_L_lambda(p, 1.0, sym);
  CHECK(L.positive_definite());
  const Field phi = random_field(g, 15, 5);
  CHECK(l2_norm(L.apply(phi) - quadrature(phi, p, sym, 1.0, 1.0, 1, 100000)) <= 1e-8);
}

TEST_CASE("exponential integral") {
  CHECK(std::abs(exponential_integral(0.0, 2.0) - 2.0) <= 1e-15);
  const cplx a(1e-9, -2e-9);
  const cplx series = 1.5 + a * 1.5 * 1.5 / 2.0 + a * a * 1.5 * 1.5 * 1.5 / 6.0;
  CHECK(std::abs(exponential_integral(a, 1.5) - series) <= 1e-15);
  const cplx b(-0.4, 3.0);
  CHECK(std::abs(exponential_integral(b, 1.0) - (std::exp(b) - 1.0) / b) <= 1e-14);
}

TEST_CASE("K_lambda is GG* L_lambda^{-1}") {
  SpectralGrid g(32);
  const auto p = default_profile(g);
  const auto L = build_L_lambda(p, 1.0, LinearSymbol(0.0));
  const Field v = random_field(g, 15, 8);
  const Field ref = apply_G(apply_Gstar(L.solve(v), p), p);
  CHECK(l2_norm(apply_K_lambda(v, L, p) - ref) <= 1e-12 * l2_norm(ref));
}

TEST_CASE("operator files round trip") {
  SpectralGrid g(16);
  const auto L = build_L_lambda(default_profile(g), 1.5, LinearSymbol(0.25), 0.8);
  for (bool binary : {true, false}) {
    std::stringstream s;
    if (binary) {
      write_operator_binary(s, L);
    } else {
      write_operator_json(s, L);
    }
    const auto back = read_operator(s);
    CHECK(back.kind() == L.kind());
    CHECK(back.n_modes() == 16);
    CHECK(back.mu() == 0.25);
    CHECK(back.param() == 1.5);
    CHECK(back.horizon() == 0.8);
    CHECK(max_abs(back.entries() - L.entries()) == 0.0);
  }
  std::stringstream junk("not an operator");
  CHECK_THROWS(read_operator(junk));
}

TEST_CASE("parallel kernels agree with serial references") {
  SpectralGrid g(64);
  const auto p = default_profile(g);
  const LinearSymbol sym(0.3);
  const auto a = kernels::assemble_ggstar(p);
  CHECK(max_abs(a - kernels::serial::assemble_ggstar(p)) == 0.0);
  CHECK(max_abs(kernels::time_weighted(a, sym, 1.0, 1.0, 1) - kernels::serial::time_weighted(a, sym, 1.0, 1.0, 1)) ==
        0.0);
  const Field phi = random_field(g, 20, 2);
  std::vector<double> times{0.0, 0.1, 0.35, 0.9, 1.0};
  const auto x = kernels::sample_adjoint_control(phi, times, 1.0, p, sym);
  const auto y = kernels::serial::sample_adjoint_control(phi, times, 1.0, p, sym);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(l2_norm(x[i] - y[i]) == 0.0);
}
