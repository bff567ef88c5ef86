#pragma once

#include <span>

// Per-level inner loops of the characteristic schemes. The `serial`
// namespace holds the reference versions; the unqualified versions are the
// OpenMP kernels the solvers call. Both produce bit-identical results: every
// kernel is elementwise, and reductions stay serial so that reports do not
// depend on the thread count.

namespace popctrl::kernels {

/// Ages above which the OpenMP kernels fork; below it they run inline.
inline constexpr int kParallelThreshold = 4096;

/// next[i] = survival[i] * prev[i-1] for i >= 1. next[0] is left untouched.
void transport_forward(std::span<const double> prev, std::span<const double> survival,
                       std::span<double> next);

/// prev[i-1] = survival[i] * next[i] for i >= 1 and prev[last] = 0: the
/// transpose of transport_forward.
void transport_backward(std::span<const double> next, std::span<const double> survival,
                        std::span<double> prev);

/// y[i] += scale * coef[i] * x[i] for i >= 1 (node 0 is the birth boundary).
void inject(std::span<double> y, std::span<const double> coef, double scale,
            std::span<const double> x);

/// y[i] += scale * coef[i] for i >= 1.
void add_scaled(std::span<double> y, std::span<const double> coef, double scale);

namespace serial {
void transport_forward(std::span<const double> prev, std::span<const double> survival,
                       std::span<double> next);
void transport_backward(std::span<const double> next, std::span<const double> survival,
                        std::span<double> prev);
void inject(std::span<double> y, std::span<const double> coef, double scale,
            std::span<const double> x);
void add_scaled(std::span<double> y, std::span<const double> coef, double scale);
}  // namespace serial

/// Caps the OpenMP worker count (no-op without OpenMP). Values < 1 are ignored.
void set_thread_cap(int threads);
int max_threads();

}  // namespace popctrl::kernels
