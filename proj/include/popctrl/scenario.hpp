#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "popctrl/control.hpp"
#include "popctrl/fixed_point.hpp"
#include "popctrl/model.hpp"
#include "popctrl/observability.hpp"

namespace popctrl {

struct AdjointSpec {
  RateFunction n_T = RateFunction::constant(1.0);
  RateFunction l_T = RateFunction::constant(1.0);
  /// Constant frozen trace; the uncontrolled nonlinear M trace when unset.
  std::optional<double> p;
};

struct ObservabilitySpec {
  int probes = 32;
  int power_iters = 15;
  bool unit_probes = true;
  /// Multiples of the uncontrolled M trace used for the p-spread.
  std::vector<double> trace_scales{1.0, 0.5, 2.0};
  /// Sweep lists for the observability subcommand; empty means the
  /// scenario's own value.
  std::vector<double> sweep_T, sweep_a1, sweep_a2;
};

struct Scenario {
  DemographicModel model;
  ControlGeometry geometry;
  double grid_h = 1.0 / 64;
  /// Initial age profiles, sampled on the grid once it is built.
  RateFunction m0 = RateFunction::constant(1.0);
  RateFunction f0 = RateFunction::constant(1.0);
  PenaltyProblem penalty;
  /// When set, kappa = kappa_relative * (||m0|| + ||f0||).
  std::optional<double> kappa_relative;
  FixedPointOptions fixed_point;
  AdjointSpec adjoint;
  ObservabilitySpec observability;
  ContractionOptions contraction;  // seed comes from the command line
  ValidationOptions validation;
  std::vector<double> sweep_epsilons{1e-2, 1e-3, 1e-4};
  std::string output_dir = "out";
  bool quiet = false;

  /// FNV-1a of the canonical (key-sorted, compact) JSON text of the input.
  std::uint64_t hash = 0;
  std::string canonical_json;
};

/// Parses scenario JSON text. Missing optional keys take the documented
/// defaults; unknown keys and type mismatches raise ConfigError naming the
/// JSON path (for example "$.model.mu_m.kind").
Scenario parse_scenario(const std::string& text);

/// Reads and parses a scenario file. Throws ConfigError if it cannot be read.
Scenario load_scenario(const std::string& path);

std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Grid for the scenario, with `h_override` replacing grid.h when set.
CharGrid scenario_grid(const Scenario& s, std::optional<double> h_override = std::nullopt);

/// PenaltyProblem with kappa resolved and mode copied from the geometry.
PenaltyProblem resolved_penalty(const Scenario& s, const CharGrid& grid, std::span<const double> m0,
                                std::span<const double> f0);

}  // namespace popctrl
