#include "popctrl/forward.hpp"

#include <algorithm>
#include <cmath>

#include "popctrl/errors.hpp"
#include "popctrl/kernels.hpp"

namespace popctrl {

namespace {

std::vector<double> survival_ratios(const DemographicModel& model, const RateFunction& mu,
                                    const CharGrid& grid) {
  const double step = std::min(model.quadrature_step, grid.h / 4.0);
  std::vector<double> s(grid.age_nodes(), 1.0);
  for (int i = 1; i < grid.Na; ++i) s[i] = survival_ratio(mu, grid.age(i - 1), grid.age(i), step);
  s[grid.Na] = model.last_cell_survival;
  return s;
}

void check_initial(std::span<const double> v, const CharGrid& grid, const char* name) {
  if (static_cast<int>(v.size()) != grid.age_nodes())
    throw DimensionError(std::string(name) + " has " + std::to_string(v.size()) +
                         " entries, grid has " + std::to_string(grid.age_nodes()) + " age nodes");
}

bool is_zero_field(const Field2D& v) { return v.age_nodes() == 0; }

void check_control(const Field2D& v, const CharGrid& grid, const char* name) {
  if (!is_zero_field(v) && !v.matches(grid))
    throw DimensionError(std::string(name) + " does not match the grid");
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

double weighted_sum(std::span<const double> w, std::span<const double> a,
                    std::span<const double> b, std::size_t from) {
  double s = 0.0;
  for (std::size_t i = from; i < w.size(); ++i) s += w[i] * a[i] * b[i];
  return s;
}

}  // namespace

ControlSupport control_support(const CharGrid& grid, const ControlGeometry& geom) {
  ControlSupport s;
  const std::vector<double> zero(grid.age_nodes(), 0.0);
  switch (geom.mode) {
    case ControlMode::Both:
      s.male = region_mask(grid, geom.a1, geom.a2);
      s.female = region_mask(grid, geom.b1, geom.b2);
      break;
    case ControlMode::MaleOnly:
      s.male = region_mask(grid, 0.0, geom.a2);
      s.female = zero;
      break;
    case ControlMode::FemaleOnly:
      s.male = zero;
      s.female = region_mask(grid, geom.b1, geom.b2);
      break;
  }
  s.male[0] = 0.0;
  s.female[0] = 0.0;
  return s;
}

Scheme::Scheme(const DemographicModel& model, const CharGrid& grid, const ControlGeometry& geom)
    : model_(model), grid_(grid), geom_(geom) {
  if (std::abs(grid.A - model.max_age) > 1e-12 * model.max_age)
    throw ConsistencyError("grid age extent " + format_double(grid.A) +
                           " differs from model max_age " + format_double(model.max_age));
  s_m_ = survival_ratios(model, model.mu_m, grid);
  s_f_ = survival_ratios(model, model.mu_f, grid);
  w_age_ = popctrl::age_weights(grid);
  w_time_ = popctrl::time_weights(grid);
  lambda_ = sample_ages(grid, [&](double a) { return lambda_eval(model, a); });
  support_ = control_support(grid, geom);
  src_m_.resize(grid.age_nodes());
  src_f_.resize(grid.age_nodes());
  for (int i = 0; i <= grid.Na; ++i) {
    src_m_[i] = w_age_[i] / grid.h * support_.male[i];
    src_f_[i] = w_age_[i] / grid.h * support_.female[i];
  }
}

std::vector<double> Scheme::beta_nodes(double p) const {
  return sample_ages(grid_, [&](double a) { return beta_eval(model_, a, p); });
}

double Scheme::birth_factor(std::span<const double> beta, int step) const {
  const double denom = 1.0 - model_.gamma * w_age_[0] * beta[0];
  if (!(denom > 0.0)) throw NumericalError("birth boundary is not solvable (1 - gamma w0 beta(0) <= 0)", step);
  return 1.0 / denom;
}

StateSolution solve_forward(const Scheme& scheme, const Field2D& v_m, const Field2D& v_f,
                            std::span<const double> m0, std::span<const double> f0,
                            const PMode& mode) {
  const CharGrid& g = scheme.grid();
  check_initial(m0, g, "m0");
  check_initial(f0, g, "f0");
  check_control(v_m, g, "v_m");
  check_control(v_f, g, "v_f");
  if (mode.is_frozen() && static_cast<int>(mode.frozen->size()) != g.time_nodes())
    throw DimensionError("frozen trace has " + std::to_string(mode.frozen->size()) +
                         " entries, grid has " + std::to_string(g.time_nodes()) + " time levels");

  const double gamma = scheme.model().gamma;
  const auto& w = scheme.age_weights();
  const auto& wt = scheme.time_weights();
  const auto& lam = scheme.lambda_nodes();
  const bool use_vm = !is_zero_field(v_m);
  const bool use_vf = !is_zero_field(v_f);

  StateSolution sol;
  sol.m = Field2D(g);
  sol.f = Field2D(g);
  sol.M_trace.assign(g.time_nodes(), 0.0);
  sol.N_trace.assign(g.time_nodes(), 0.0);
  sol.p_used.assign(g.time_nodes(), 0.0);

  auto add_sources = [&](int n) {
    if (use_vm) kernels::inject(sol.m.level(n), scheme.source_m(), wt[n], v_m.level(n));
    if (use_vf) kernels::inject(sol.f.level(n), scheme.source_f(), wt[n], v_f.level(n));
  };
  auto check_level = [&](int n) {
    if (!all_finite(sol.m.level(n)) || !all_finite(sol.f.level(n)))
      throw NumericalError("non-finite state", n);
  };

  std::copy(m0.begin(), m0.end(), sol.m.level(0).begin());
  std::copy(f0.begin(), f0.end(), sol.f.level(0).begin());
  add_sources(0);
  check_level(0);
  sol.M_trace[0] = weighted_sum(w, lam, sol.m.level(0), 0);
  sol.p_used[0] = mode.is_frozen() ? (*mode.frozen)[0] : sol.M_trace[0];
  {
    const auto beta = scheme.beta_nodes(sol.p_used[0]);
    sol.N_trace[0] = weighted_sum(w, beta, sol.f.level(0), 0);
  }

  for (int n = 0; n < g.Nt; ++n) {
    auto m = sol.m.level(n + 1);
    auto f = sol.f.level(n + 1);
    const double m_prev0 = sol.m(0, n);
    kernels::transport_forward(sol.m.level(n), scheme.survival_m(), m);
    kernels::transport_forward(sol.f.level(n), scheme.survival_f(), f);
    add_sources(n + 1);

    double P = 0.0;
    if (mode.is_frozen())
      P = (*mode.frozen)[n + 1];
    else
      P = weighted_sum(w, lam, m, 1) + w[0] * lam[0] * m_prev0;

    auto close_boundary = [&](double p) {
      const auto beta = scheme.beta_nodes(p);
      const double r = scheme.birth_factor(beta, n + 1);
      const double N = r * weighted_sum(w, beta, f, 1);
      m[0] = (1.0 - gamma) * N;
      f[0] = gamma * N;
      return N;
    };
    double N = close_boundary(P);
    if (!mode.is_frozen() && lam[0] != 0.0) {
      P = weighted_sum(w, lam, m, 0);
      N = close_boundary(P);
    }
    check_level(n + 1);
    sol.p_used[n + 1] = P;
    sol.N_trace[n + 1] = N;
    sol.M_trace[n + 1] = weighted_sum(w, lam, m, 0);
  }
  return sol;
}

StateSolution solve_forward(const DemographicModel& model, const CharGrid& grid,
                            const ControlGeometry& geom, const Field2D& v_m, const Field2D& v_f,
                            std::span<const double> m0, std::span<const double> f0,
                            const PMode& mode) {
  return solve_forward(Scheme(model, grid, geom), v_m, v_f, m0, f0, mode);
}

double compute_M(std::span<const double> m_slice, const DemographicModel& model,
                 const CharGrid& grid) {
  std::vector<double> integrand(m_slice.size());
  if (static_cast<int>(m_slice.size()) != grid.age_nodes())
    throw DimensionError("m slice has " + std::to_string(m_slice.size()) + " entries, grid has " +
                         std::to_string(grid.age_nodes()) + " age nodes");
  for (int i = 0; i <= grid.Na; ++i) integrand[i] = lambda_eval(model, grid.age(i)) * m_slice[i];
  return integrate_age(integrand, grid);
}

}  // namespace popctrl
