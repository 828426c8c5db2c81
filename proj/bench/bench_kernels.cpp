#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "kdv/kernels.hpp"

using namespace kdv;

namespace {

ControlProfile profile(int n) {
  return ControlProfile::bump(std::numbers::pi, std::numbers::pi / 2, SpectralGrid(n));
}

Field smooth_field(const SpectralGrid& g) {
  std::vector<double> u(g.size());
  for (int j = 0; j < g.size(); ++j) u[j] = std::cos(g.point(j)) + 0.3 * std::sin(3 * g.point(j));
  return Field::from_physical(u, g);
}

template <bool Parallel>
void ggstar(benchmark::State& state) {
  const auto p = profile(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? kernels::assemble_ggstar(p) : kernels::serial::assemble_ggstar(p));
  }
}

template <bool Parallel>
void time_weighted(benchmark::State& state) {
  const auto p = profile(static_cast<int>(state.range(0)));
  const auto base = kernels::serial::assemble_ggstar(p);
  const LinearSymbol sym(0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? kernels::time_weighted(base, sym, 1.0, 1.0, 1)
                                      : kernels::serial::time_weighted(base, sym, 1.0, 1.0, 1));
  }
}

template <bool Parallel>
void adjoint_control(benchmark::State& state) {
  const auto p = profile(static_cast<int>(state.range(0)));
  const Field phi = smooth_field(p.grid());
  const LinearSymbol sym(0.0);
  std::vector<double> times(1001);
  for (std::size_t i = 0; i < times.size(); ++i) times[i] = 1e-3 * static_cast<double>(i);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? kernels::sample_adjoint_control(phi, times, 1.0, p, sym)
                                      : kernels::serial::sample_adjoint_control(phi, times, 1.0, p, sym));
  }
}

}  // namespace

BENCHMARK(ggstar<false>)->Name("assemble_ggstar/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(ggstar<true>)->Name("assemble_ggstar/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(time_weighted<false>)->Name("time_weighted/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(time_weighted<true>)->Name("time_weighted/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(adjoint_control<false>)->Name("sample_adjoint_control/serial")->Arg(64)->Arg(128);
BENCHMARK(adjoint_control<true>)->Name("sample_adjoint_control/omp")->Arg(64)->Arg(128);

BENCHMARK_MAIN();
