#include "popctrl/kernels.hpp"

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace popctrl::kernels {

namespace {

// An `omp if` clause still enters the runtime (~0.5 us per call), which
// dominates at grid sizes; short loops and nested calls go straight to the
// serial version instead.
bool fork(int n) {
#ifdef _OPENMP
  return n > kParallelThreshold && !omp_in_parallel();
#else
  (void)n;
  return false;
#endif
}

}  // namespace

void transport_forward(std::span<const double> prev, std::span<const double> survival,
                       std::span<double> next) {
  const int n = static_cast<int>(next.size());
  if (!fork(n)) return serial::transport_forward(prev, survival, next);
#pragma omp parallel for schedule(static)
  for (int i = 1; i < n; ++i) next[i] = survival[i] * prev[i - 1];
}

void transport_backward(std::span<const double> next, std::span<const double> survival,
                        std::span<double> prev) {
  const int n = static_cast<int>(prev.size());
  if (!fork(n)) return serial::transport_backward(next, survival, prev);
#pragma omp parallel for schedule(static)
  for (int i = 1; i < n; ++i) prev[i - 1] = survival[i] * next[i];
  prev[n - 1] = 0.0;
}

void inject(std::span<double> y, std::span<const double> coef, double scale,
            std::span<const double> x) {
  const int n = static_cast<int>(y.size());
  if (!fork(n)) return serial::inject(y, coef, scale, x);
#pragma omp parallel for schedule(static)
  for (int i = 1; i < n; ++i) y[i] += scale * coef[i] * x[i];
}

void add_scaled(std::span<double> y, std::span<const double> coef, double scale) {
  const int n = static_cast<int>(y.size());
  if (!fork(n)) return serial::add_scaled(y, coef, scale);
#pragma omp parallel for schedule(static)
  for (int i = 1; i < n; ++i) y[i] += scale * coef[i];
}

namespace serial {

void transport_forward(std::span<const double> prev, std::span<const double> survival,
                       std::span<double> next) {
  for (std::size_t i = 1; i < next.size(); ++i) next[i] = survival[i] * prev[i - 1];
}

void transport_backward(std::span<const double> next, std::span<const double> survival,
                        std::span<double> prev) {
  for (std::size_t i = 1; i < prev.size(); ++i) prev[i - 1] = survival[i] * next[i];
  prev.back() = 0.0;
}

void inject(std::span<double> y, std::span<const double> coef, double scale,
            std::span<const double> x) {
  for (std::size_t i = 1; i < y.size(); ++i) y[i] += scale * coef[i] * x[i];
}

void add_scaled(std::span<double> y, std::span<const double> coef, double scale) {
  for (std::size_t i = 1; i < y.size(); ++i) y[i] += scale * coef[i];
}

}  // namespace serial

void set_thread_cap(int threads) {
#ifdef _OPENMP
  if (threads >= 1) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace popctrl::kernels
