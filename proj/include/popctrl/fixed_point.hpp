#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "popctrl/control.hpp"

namespace popctrl {

inline constexpr const char* kFlagFixedPointNotReached = "FIXED_POINT_NOT_REACHED";

struct FixedPointOptions {
  double omega = 0.5;  // damping, in (0, 1]
  double fp_tol = 1e-6;
  int max_outer_iters = 50;
};

void check_fixed_point_options(const FixedPointOptions& opts);

struct FixedPointIterate {
  int iteration = 0;
  double delta_l2 = 0.0;   // ||p_{k+1} - p_k||_{L2(0,T)}
  double delta_sup = 0.0;  // max |p_{k+1} - p_k|
  double p_norm = 0.0;     // ||p_k||_{L2(0,T)}
  double terminal_m = 0.0, terminal_f = 0.0;
  int cg_iterations = 0;
  /// sup|Y| and ||dY/dt||_{L2} divided by ||m0|| + ||f0||.
  double y_sup_ratio = 0.0;
  double y_dot_ratio = 0.0;
};

struct FixedPointState {
  std::vector<double> p;  // last iterate
  std::vector<double> Y;  // Lambda(p) at the last iterate
  std::vector<FixedPointIterate> history;
  double omega = 0.5;
  double epsilon = 0.0, theta = 0.0;  // penalty stage used by Lambda
  bool converged = false;

  /// delta_k / delta_{k-1} for k >= 1.
  std::vector<double> delta_ratios() const;
};

struct FixedPointResult {
  FixedPointState state;
  /// Penalty minimizer at the last frozen trace.
  ControlResult frozen;
  /// Nonlinear solve driven by the frozen-trace controls.
  StateSolution nonlinear;
  TerminalNorms nonlinear_norms;
  /// Stage search at the initial trace.
  NullControlResult initial;
  std::vector<std::string> flags;
};

/// L2(0,T) norm (trapezoid) of a time trace.
double trace_norm(std::span<const double> trace, const CharGrid& grid);

/// W(0,T) ratios of a trace: sup|Y| and the L2 norm of its difference
/// quotient, both divided by `data_norm`.
std::pair<double, double> w_ratios(std::span<const double> Y, const CharGrid& grid, double data_norm);

/// Y = int lambda m da of the controlled frozen solve at trace p and the
/// given penalty stage.
struct LambdaEvaluation {
  std::vector<double> Y;
  ControlResult control;
};
LambdaEvaluation lambda_map(const Scheme& scheme, const PenaltyProblem& stage, std::span<const double> p,
                            std::span<const double> m0, std::span<const double> f0,
                            const Controls* warm_start = nullptr);

/// Damped Picard iteration p <- (1-omega) p + omega Lambda(p) from the
/// uncontrolled nonlinear M trace. The penalty stage is chosen once by
/// synthesize_null_control at the initial trace and then held fixed.
FixedPointResult iterate_to_fixed_point(const Scheme& scheme, const PenaltyProblem& problem,
                                        const FixedPointOptions& opts, std::span<const double> m0,
                                        std::span<const double> f0);

struct ContractionOptions {
  int trials = 50;
  std::uint64_t seed = 0;
  /// Random fields are drawn uniformly from [0, field_scale].
  double field_scale = 1.0;
  /// Range of p used to measure sup beta2.
  double p_max = 10.0;
  double tolerance = 0.1;
};

struct ContractionReport {
  double sigma_hat = 0.0;
  double lambda_sup = 0.0, beta1_sup = 0.0, beta2_sup = 0.0, lipschitz = 0.0;
  std::vector<double> ratios;  // one per non-degenerate pair
  int skipped = 0;             // pairs with d(p,q) = 0
  double max_ratio = 0.0;
  double bound = 0.0;          // 1/sqrt(2) + tolerance
  bool passed = false;
};

/// Weighted-metric contraction probe of Phi(p) = m(p): the state solved
/// with fertility argument int lambda p(., t) da, the scheme's data m0, f0
/// and no control. Trials run in parallel with per-trial seeds.
/// Throws ConfigError unless the fertility is separable.
ContractionReport contraction_test(const Scheme& scheme, std::span<const double> m0, std::span<const double> f0,
                                   const ContractionOptions& opts);

}  // namespace popctrl
