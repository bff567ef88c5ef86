#pragma once

#include <span>
#include <vector>

#include "popctrl/forward.hpp"

namespace popctrl {

/// Which adjoint system to solve.
///   Coupled    - (n, l) with both terminal data.
///   MaleOnly   - l_T is forced to zero and n_T is cut to ages >= rho.
///   FemaleOnly - n_T is forced to zero.
enum class AdjointMode { Coupled, MaleOnly, FemaleOnly };

AdjointMode adjoint_mode_for(ControlMode mode);

struct AdjointSolution {
  Field2D n, l;
  std::vector<double> n0_trace;  // n(0, t_k)
  std::vector<double> l0_trace;  // l(0, t_k)
  std::vector<double> p_trace;
  /// Terminal data after the mode's masking. l(., T) itself already carries
  /// the birth coupling of the last level.
  std::vector<double> n_T, l_T;
};

/// Backward sweep that is the exact transpose of the frozen forward scheme
/// under the pairing <x, y> = sum_i h x_i y_i on every level. n never sees l
/// or the fertility; l picks up the birth coupling at each level k >= 1.
AdjointSolution solve_adjoint(const Scheme& scheme, std::span<const double> n_T,
                              std::span<const double> l_T, std::span<const double> p,
                              AdjointMode mode = AdjointMode::Coupled);

/// Terms of the discrete duality identity
///   <m(T),n_T> + <f(T),l_T> = <m0,n(0)> + <f0,l(0)> + sum W mask (v_m n + v_f l).
struct DualityTerms {
  double terminal = 0.0;
  double initial = 0.0;
  double control = 0.0;
  double residual = 0.0;  // |terminal - initial - control|
  double scale = 0.0;     // sum of absolute values of all pairing terms
};

/// Throws ConsistencyError when the forward solve was not frozen at the
/// adjoint's trace.
DualityTerms duality_pairing(const Scheme& scheme, const StateSolution& fwd,
                             const AdjointSolution& adj, const Field2D& v_m, const Field2D& v_f,
                             std::span<const double> m0, std::span<const double> f0);

/// Node-sum pairing h * sum x_i y_i.
double node_pairing(std::span<const double> x, std::span<const double> y, double h);

}  // namespace popctrl
