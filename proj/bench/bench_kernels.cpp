// OpenMP kernels against the serial reference, plus whole solves with the
// thread cap at 1 and at the machine default.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "popctrl/forward.hpp"
#include "popctrl/kernels.hpp"
#include "popctrl/observability.hpp"

using namespace popctrl;

namespace {

// Read before any benchmark lowers the cap.
const int kDefaultThreads = kernels::max_threads();

std::vector<double> random_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_TransportForward(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto prev = random_vector(n, 1), surv = random_vector(n, 2);
  std::vector<double> next(n);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::transport_forward(prev, surv, next);
    else
      kernels::serial::transport_forward(prev, surv, next);
    benchmark::DoNotOptimize(next.data());
  }
  st.SetItemsProcessed(st.iterations() * n);
}

template <bool Parallel>
void BM_Inject(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto coef = random_vector(n, 3), x = random_vector(n, 4);
  std::vector<double> y(n, 0.0);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::inject(y, coef, 1e-3, x);
    else
      kernels::serial::inject(y, coef, 1e-3, x);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * n);
}

DemographicModel bench_model() {
  DemographicModel m;
  m.mu_m = RateFunction::expr("0.2 + 0.3*a^2", "a");
  m.mu_f = RateFunction::expr("0.15 + 0.25*a", "a");
  SeparableFertility s;
  s.age_profile = RateFunction::expr("2*step(a - 0.15)*(1.2 - a)", "a");
  s.response = RateFunction::expr("p/(1+p)", "p");
  m.beta = Fertility(s);
  m.lambda = RateFunction::expr("4*a*(1-a)", "a");
  m.fertility_onset = 0.15;
  return m;
}

ControlGeometry bench_geometry() {
  ControlGeometry g;
  g.a1 = 0.2;
  g.a2 = 0.9;
  g.b1 = 0.1;
  g.b2 = 0.95;
  g.T = 0.35;
  return g;
}

// range(0): 1/h; range(1): thread cap (0 = default).
void BM_ForwardSolve(benchmark::State& st) {
  const int threads = static_cast<int>(st.range(1));
  kernels::set_thread_cap(threads > 0 ? threads : kDefaultThreads);
  const auto geom = bench_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / static_cast<double>(st.range(0)));
  const Scheme s(bench_model(), g, geom);
  const auto m0 = random_vector(g.age_nodes(), 5), f0 = random_vector(g.age_nodes(), 6);
  for (auto _ : st) benchmark::DoNotOptimize(solve_forward(s, Field2D(), Field2D(), m0, f0, PMode::nonlinear()));
}

void BM_ObservabilityProbes(benchmark::State& st) {
  const int threads = static_cast<int>(st.range(0));
  kernels::set_thread_cap(threads > 0 ? threads : kDefaultThreads);
  const auto geom = bench_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  const Scheme s(bench_model(), g, geom);
  const std::vector<double> p(g.time_nodes(), 0.5);
  ObservabilityOptions o;
  o.probes = 16;
  o.power_iters = 0;
  for (auto _ : st) benchmark::DoNotOptimize(estimate_constant(s, p, o));
}

}  // namespace

BENCHMARK_TEMPLATE(BM_TransportForward, false)->RangeMultiplier(8)->Range(64, 1 << 18);
BENCHMARK_TEMPLATE(BM_TransportForward, true)->RangeMultiplier(8)->Range(64, 1 << 18);
BENCHMARK_TEMPLATE(BM_Inject, false)->RangeMultiplier(8)->Range(64, 1 << 18);
BENCHMARK_TEMPLATE(BM_Inject, true)->RangeMultiplier(8)->Range(64, 1 << 18);
BENCHMARK(BM_ForwardSolve)->Args({64, 1})->Args({64, 0})->Args({512, 1})->Args({512, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ObservabilityProbes)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
