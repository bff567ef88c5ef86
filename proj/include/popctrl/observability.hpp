#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "popctrl/adjoint.hpp"

namespace popctrl {

/// Observability quotient of one terminal datum: initial adjoint energy over
/// adjoint energy on the control windows. `unbounded` marks a zero
/// denominator with a positive numerator (the datum is not observed).
struct Quotient {
  bool unbounded = false;
  double value = 0.0;  // meaningless when unbounded
  double numerator = 0.0;
  double denominator = 0.0;

  static Quotient from(double num, double den);
  /// +inf for the unbounded case, for sorting and printing.
  double as_double() const;
};

/// Quotient for (n_T, l_T) under the adjoint mode (coupled, male-only with
/// the rho cut, female-only). Throws DomainError when the (masked) terminal
/// data vanish identically.
Quotient observability_ratio(const Scheme& scheme, std::span<const double> n_T, std::span<const double> l_T,
                             std::span<const double> p, AdjointMode mode);

struct ObservabilityOptions {
  AdjointMode mode = AdjointMode::Coupled;
  int probes = 32;          // Gaussian terminal data
  bool unit_probes = true;  // one probe per terminal node and component
  int power_iters = 15;     // generalized Rayleigh iteration, 0 disables
  int inner_cg_iters = 400;
  double inner_cg_tol = 1e-10;
  /// Shift added to the window form in the power iteration, relative to its
  /// largest diagonal probe.
  double regularization = 1e-10;
  double divergence_threshold = 1e10;
  std::uint64_t seed = 0;
};

struct ObservabilityReport {
  double estimated_constant = 0.0;  // max finite sample
  std::vector<Quotient> quotient_samples;
  std::optional<double> power_estimate;
  int unbounded_samples = 0;
  bool diverged = false;
  ControlGeometry geometry;
  CharGrid grid;
  double threshold_margin = 0.0;
};

/// Lower estimate of the observability constant at one frozen trace: the
/// largest quotient over random probes, unit probes and a few steps of
/// inverse iteration on the pencil (numerator form, window form).
/// Probes run in parallel with per-probe seeds.
ObservabilityReport estimate_constant(const Scheme& scheme, std::span<const double> p,
                                      const ObservabilityOptions& opts);

struct TraceSpread {
  std::vector<double> estimates;
  double spread = 0.0;  // (max - min) / min
  bool any_diverged = false;
};

/// estimate_constant repeated over several traces.
TraceSpread estimate_across_traces(const Scheme& scheme, const std::vector<std::vector<double>>& traces,
                                   const ObservabilityOptions& opts);

struct GeometryReport {
  double margin_theorem1 = 0.0;        // T - (a1 + A - a2)
  double margin_theorem2_male = 0.0;   // T - (A - a2)
  double margin_theorem2_female = 0.0; // T - (a1 + A - a2)
  bool lemma1_witness = false;
  double lemma1_a0 = 0.0, lemma1_kappa = 0.0;
  bool lemma2_witness = false;
  double lemma2_a0 = 0.0, lemma2_kappa = 0.0;
};

/// Time margins and explicit witnesses (a0, kappa) of the two geometric
/// lemmas, when the strict inequalities leave room for them.
GeometryReport geometry_threshold_check(const ControlGeometry& geom, double max_age);

/// Terminal nodes whose value does not depend on any control: found by
/// propagating reachability forward through transport, control windows
/// and births (beta(a_j, p) > 0) on the lattice.
struct UnreachableSet {
  std::vector<bool> male, female;  // per terminal age node
  /// Trapezoid measure of the flagged ages, leaving out the node a = A.
  double male_measure = 0.0, female_measure = 0.0;
};
UnreachableSet unreachable_terminal_ages(const Scheme& scheme, std::span<const double> p);

}  // namespace popctrl
