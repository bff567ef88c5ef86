#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popctrl/adjoint.hpp"
#include "popctrl/forward.hpp"

namespace popctrl {

inline constexpr const char* kFlagNonAdmissible = "NON_ADMISSIBLE";
inline constexpr const char* kFlagConvergenceNotReached = "CONVERGENCE_NOT_REACHED";
inline constexpr const char* kFlagTargetNotReached = "TARGET_NOT_REACHED";

/// Penalty weights and stopping rules.
///
/// BOTH weighs m(T) by 1/epsilon and f(T) by 1/theta. MALE_ONLY keeps only
/// the m(T) term restricted to (rho, A); FEMALE_ONLY keeps only the f(T) term,
/// weighted by 1/epsilon.
///
/// kappa is the terminal tolerance for m (or for f in FEMALE_ONLY);
/// kappa_f, when set, is the tolerance for f in BOTH (defaults to kappa).
struct PenaltyProblem {
  double epsilon = 1e-2;
  double theta = 1e-2;
  double kappa = 1e-3;
  std::optional<double> kappa_f;
  ControlMode mode = ControlMode::Both;
  int max_cg_iters = 5000;
  double cg_tol = 1e-10;

  // geometric epsilon schedule of synthesize_null_control
  double schedule_eps0 = 1e-2;
  double schedule_ratio = 10.0;
  int schedule_stages = 4;

  double female_tolerance() const { return kappa_f.value_or(kappa); }
};

/// Throws ConfigError on non-positive weights or tolerances.
void check_problem(const PenaltyProblem& problem);

struct Controls {
  Field2D v_m, v_f;
};

Controls zero_controls(const CharGrid& grid);

/// Terminal-state weights q_m, q_f (trapezoid weights times the terminal age
/// mask) and penalty coefficients for the mode.
struct PenaltyWeights {
  std::vector<double> q_m, q_f;
  double c_m = 0.0, c_f = 0.0;
};

PenaltyWeights penalty_weights(const Scheme& scheme, const PenaltyProblem& problem);

/// Grid L2 norms of m(., T) (over (rho, A) in MALE_ONLY) and f(., T).
struct TerminalNorms {
  double m = 0.0, f = 0.0;
};
TerminalNorms terminal_norms(const Scheme& scheme, const StateSolution& sol);

/// Weighted control inner product sum W mask (u_m w_m + u_f w_f), W = w_i w^t_n.
double control_inner(const Scheme& scheme, const Controls& u, const Controls& w);

double evaluate_J(const Scheme& scheme, const PenaltyProblem& problem, std::span<const double> p,
                  std::span<const double> m0, std::span<const double> f0, const Controls& v);

/// Riesz representative of dJ in the weighted control inner product:
/// (v_m - n, v_f - l) on the support nodes, zero elsewhere.
Controls gradient_J(const Scheme& scheme, const PenaltyProblem& problem, std::span<const double> p,
                    std::span<const double> m0, std::span<const double> f0, const Controls& v);

struct ControlResult {
  Controls controls;
  double terminal_m_norm = 0.0;
  double terminal_f_norm = 0.0;
  double J_value = 0.0;
  double epsilon = 0.0;
  double theta = 0.0;
  int iterations = 0;
  /// Relative gradient norm after each CG iteration (entry 0 is 1).
  std::vector<double> cg_trace;
  std::vector<std::string> flags;
  StateSolution state;

  bool has_flag(const std::string& f) const;
};

/// Conjugate gradients on the quadratic J at fixed (epsilon, theta), started
/// from `warm_start` when given. Stops once the gradient norm falls to
/// cg_tol times its starting value.
ControlResult minimize_penalty(const Scheme& scheme, const PenaltyProblem& problem,
                               std::span<const double> p, std::span<const double> m0,
                               std::span<const double> f0, const Controls* warm_start = nullptr);

struct ScheduleStage {
  double epsilon = 0.0, theta = 0.0;
  double terminal_m_norm = 0.0, terminal_f_norm = 0.0;
  double J_value = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct NullControlResult {
  ControlResult result;
  std::vector<ScheduleStage> stages;
  /// Terminal norms with zero controls.
  TerminalNorms uncontrolled;
  bool reached = false;
};

/// Runs minimize_penalty along epsilon_k = eps0 / ratio^k (theta scaled by
/// the configured theta/epsilon) until the terminal norms meet the
/// tolerances. Returns at the first stage that does, or the last stage with
/// TARGET_NOT_REACHED.
NullControlResult synthesize_null_control(const Scheme& scheme, const PenaltyProblem& problem,
                                          std::span<const double> p, std::span<const double> m0,
                                          std::span<const double> f0);

/// Tolerance test used by the schedule for the mode.
bool meets_target(const PenaltyProblem& problem, double m_norm, double f_norm);

}  // namespace popctrl
