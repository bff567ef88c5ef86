#pragma once

#include <optional>
#include <span>
#include <vector>

#include "popctrl/grid.hpp"
#include "popctrl/model.hpp"

namespace popctrl {

/// Region weights of the two controls on the age nodes. Node 0 carries the
/// birth boundary and is always zero.
struct ControlSupport {
  std::vector<double> male;
  std::vector<double> female;
};

/// Xi / Xi' for BOTH, Theta = (0,a2) and no female control for MALE_ONLY,
/// Xi' alone for FEMALE_ONLY.
ControlSupport control_support(const CharGrid& grid, const ControlGeometry& geom);

/// Everything a solve needs that depends only on (model, grid, geometry):
/// per-cell survival ratios, quadrature weights, lambda on the nodes and the
/// control masks. Immutable once built; share it between solves.
class Scheme {
 public:
  Scheme(const DemographicModel& model, const CharGrid& grid, const ControlGeometry& geom);

  const DemographicModel& model() const noexcept { return model_; }
  const CharGrid& grid() const noexcept { return grid_; }
  const ControlGeometry& geometry() const noexcept { return geom_; }

  /// s_m[i] = pi_m(a_i)/pi_m(a_{i-1}) for i >= 1; s_m[0] unused (= 1). The
  /// last cell uses model.last_cell_survival.
  const std::vector<double>& survival_m() const noexcept { return s_m_; }
  const std::vector<double>& survival_f() const noexcept { return s_f_; }
  const std::vector<double>& age_weights() const noexcept { return w_age_; }
  const std::vector<double>& time_weights() const noexcept { return w_time_; }
  const std::vector<double>& lambda_nodes() const noexcept { return lambda_; }
  const ControlSupport& support() const noexcept { return support_; }

  /// Per-node source coefficients (w_i/h) * mask_i; the time weight is
  /// applied per level.
  const std::vector<double>& source_m() const noexcept { return src_m_; }
  const std::vector<double>& source_f() const noexcept { return src_f_; }

  /// beta(a_i, p) on every node.
  std::vector<double> beta_nodes(double p) const;
  /// 1 / (1 - gamma * w_0 * beta_0): closes the birth boundary exactly when
  /// beta does not vanish at age 0. Throws NumericalError(step) when the
  /// denominator is not positive.
  double birth_factor(std::span<const double> beta, int step) const;

 private:
  DemographicModel model_;
  CharGrid grid_;
  ControlGeometry geom_;
  std::vector<double> s_m_, s_f_, w_age_, w_time_, lambda_;
  ControlSupport support_;
  std::vector<double> src_m_, src_f_;
};

/// Fertility argument: the solution's own M(t) (system with nonlocal
/// coupling), or a supplied trace p(t) on the time levels (auxiliary linear
/// system).
struct PMode {
  std::optional<std::vector<double>> frozen;

  static PMode nonlinear() { return {}; }
  static PMode frozen_trace(std::vector<double> p) { return {std::move(p)}; }
  bool is_frozen() const noexcept { return frozen.has_value(); }
};

struct StateSolution {
  Field2D m, f;
  std::vector<double> M_trace;  // int lambda m da per level
  std::vector<double> N_trace;  // births per level
  /// Fertility argument actually used at each level.
  std::vector<double> p_used;
};

/// Marches the state along characteristics. Empty control fields
/// (default-constructed Field2D) mean zero controls. m0, f0 are node
/// samples of the initial data.
///
/// Level 0 is (m0, f0) plus the level-0 control source; the boundary is not
/// rewritten there, so the birth relations hold from level 1 on.
StateSolution solve_forward(const Scheme& scheme, const Field2D& v_m, const Field2D& v_f,
                            std::span<const double> m0, std::span<const double> f0,
                            const PMode& mode);

StateSolution solve_forward(const DemographicModel& model, const CharGrid& grid,
                            const ControlGeometry& geom, const Field2D& v_m, const Field2D& v_f,
                            std::span<const double> m0, std::span<const double> f0,
                            const PMode& mode);

/// Trapezoid integral of lambda * m over one age profile.
double compute_M(std::span<const double> m_slice, const DemographicModel& model,
                 const CharGrid& grid);

}  // namespace popctrl
