#include <benchmark/benchmark.h>

#include <vector>

#include "kslab/diagnostics.hpp"
#include "kslab/pde.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/potential.hpp"
#include "kslab/profiles.hpp"

namespace {

kslab::DensityField gaussian(int n) {
  const kslab::Grid2D g(8.0, n);
  return kslab::DensityField::sample(g, kslab::Gaussian{4.0 * kslab::kPi, 1.0, {}});
}

void BM_NewtonianGradient(benchmark::State& state) {
  const auto u = gaussian(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kslab::newtonian_gradient(u));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NewtonianGradient)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);

void BM_PdeStep(benchmark::State& state) {
  const auto u = gaussian(static_cast<int>(state.range(0)));
  kslab::pde::SolverParams sp;
  sp.diffusion = state.range(1) ? kslab::pde::DiffusionMode::SemiImplicit
                                : kslab::pde::DiffusionMode::Explicit;
  for (auto _ : state) benchmark::DoNotOptimize(kslab::pde::step(u, {}, 0.0, sp));
}
BENCHMARK(BM_PdeStep)
    ->ArgsProduct({{64, 128, 256}, {0, 1}})
    ->ArgNames({"n", "implicit"})
    ->Unit(benchmark::kMillisecond);

void BM_FreeEnergy(benchmark::State& state) {
  const auto u = gaussian(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kslab::free_energy(u));
}
BENCHMARK(BM_FreeEnergy)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_LocalMassSup(benchmark::State& state) {
  const auto u = gaussian(static_cast<int>(state.range(0)));
  const double r = 8.0 * u.grid().h();
  for (auto _ : state) benchmark::DoNotOptimize(kslab::local_mass_sup(u, r));
}
BENCHMARK(BM_LocalMassSup)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_PRhs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<kslab::Vec2> p;
  for (std::size_t j = 0; j < n; ++j)
    p.push_back(kslab::rotate({3.0 + 0.01 * j, 0.0}, 2.0 * kslab::kPi * j / n));
  for (auto _ : state) benchmark::DoNotOptimize(kslab::pointdyn::p_rhs(p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PRhs)->RangeMultiplier(4)->Range(4, 256)->Complexity(benchmark::oNSquared);

void BM_CriticalPoint(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::vector<kslab::Vec2> p;
  for (int j = 0; j < n; ++j) p.push_back({0.3 * j + 0.1, 0.2 * j * j - 0.5 * j});
  const kslab::PointConfiguration c(p, kslab::Frame::RenormalizedP);
  for (auto _ : state) benchmark::DoNotOptimize(kslab::pointdyn::find_critical_point(c, {}));
}
BENCHMARK(BM_CriticalPoint)->DenseRange(2, 5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
