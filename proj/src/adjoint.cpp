#include "popctrl/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "popctrl/errors.hpp"
#include "popctrl/kernels.hpp"

namespace popctrl {

AdjointMode adjoint_mode_for(ControlMode mode) {
  switch (mode) {
    case ControlMode::MaleOnly:
      return AdjointMode::MaleOnly;
    case ControlMode::FemaleOnly:
      return AdjointMode::FemaleOnly;
    case ControlMode::Both:
      break;
  }
  return AdjointMode::Coupled;
}

double node_pairing(std::span<const double> x, std::span<const double> y, double h) {
  if (x.size() != y.size()) throw DimensionError("pairing of slices with different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return h * s;
}

AdjointSolution solve_adjoint(const Scheme& scheme, std::span<const double> n_T,
                              std::span<const double> l_T, std::span<const double> p,
                              AdjointMode mode) {
  const CharGrid& g = scheme.grid();
  if (static_cast<int>(n_T.size()) != g.age_nodes() || static_cast<int>(l_T.size()) != g.age_nodes())
    throw DimensionError("terminal data must have " + std::to_string(g.age_nodes()) + " entries");
  if (static_cast<int>(p.size()) != g.time_nodes())
    throw DimensionError("frozen trace has " + std::to_string(p.size()) + " entries, grid has " +
                         std::to_string(g.time_nodes()) + " time levels");

  const double gamma = scheme.model().gamma;
  const auto& w = scheme.age_weights();

  AdjointSolution adj;
  adj.n = Field2D(g);
  adj.l = Field2D(g);
  adj.n0_trace.assign(g.time_nodes(), 0.0);
  adj.l0_trace.assign(g.time_nodes(), 0.0);
  adj.p_trace.assign(p.begin(), p.end());

  auto nT = adj.n.level(g.Nt);
  auto lT = adj.l.level(g.Nt);
  if (mode != AdjointMode::FemaleOnly) std::copy(n_T.begin(), n_T.end(), nT.begin());
  if (mode != AdjointMode::MaleOnly) std::copy(l_T.begin(), l_T.end(), lT.begin());
  if (mode == AdjointMode::MaleOnly) {
    const double rho = scheme.geometry().rho;
    for (int i = 0; i <= g.Na; ++i)
      if (g.age(i) < rho - 1e-9 * g.h) nT[i] = 0.0;
  }

  adj.n_T.assign(nT.begin(), nT.end());
  adj.l_T.assign(lT.begin(), lT.end());

  for (int k = g.Nt; k >= 1; --k) {
    auto n = adj.n.level(k);
    auto l = adj.l.level(k);
    const double n0 = n[0];
    const double l0 = l[0];
    adj.n0_trace[k] = n0;
    adj.l0_trace[k] = l0;
    const double coupling = (1.0 - gamma) * n0 + gamma * l0;
    if (coupling != 0.0) {
      const auto beta = scheme.beta_nodes(p[k]);
      const double r = scheme.birth_factor(beta, k);
      for (int j = 1; j <= g.Na; ++j) l[j] += r * w[j] * beta[j] * coupling;
    }
    kernels::transport_backward(n, scheme.survival_m(), adj.n.level(k - 1));
    kernels::transport_backward(l, scheme.survival_f(), adj.l.level(k - 1));
    const auto lv = adj.l.level(k);
    if (!std::all_of(lv.begin(), lv.end(), [](double v) { return std::isfinite(v); }))
      throw NumericalError("non-finite adjoint state", k);
  }
  adj.n0_trace[0] = adj.n(0, 0);
  adj.l0_trace[0] = adj.l(0, 0);
  return adj;
}

DualityTerms duality_pairing(const Scheme& scheme, const StateSolution& fwd,
                             const AdjointSolution& adj, const Field2D& v_m, const Field2D& v_f,
                             std::span<const double> m0, std::span<const double> f0) {
  const CharGrid& g = scheme.grid();
  if (!fwd.m.matches(g) || !adj.n.matches(g)) throw DimensionError("solutions do not match the grid");
  if (fwd.p_used.size() != adj.p_trace.size())
    throw ConsistencyError("forward and adjoint traces have different lengths");
  for (std::size_t k = 1; k < adj.p_trace.size(); ++k)
    if (fwd.p_used[k] != adj.p_trace[k])
      throw ConsistencyError("forward solve was not frozen at the adjoint trace (level " +
                             std::to_string(k) + ")");

  const double h = g.h;
  const auto& w = scheme.age_weights();
  const auto& wt = scheme.time_weights();
  const auto& mm = scheme.support().male;
  const auto& mf = scheme.support().female;

  DualityTerms d;
  const double t1 = node_pairing(fwd.m.level(g.Nt), adj.n_T, h);
  const double t2 = node_pairing(fwd.f.level(g.Nt), adj.l_T, h);
  const double i1 = node_pairing(m0, adj.n.level(0), h);
  const double i2 = node_pairing(f0, adj.l.level(0), h);
  double c = 0.0, c_abs = 0.0;
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 1; i <= g.Na; ++i) {
      double term = 0.0;
      if (v_m.age_nodes() != 0) term += w[i] * wt[n] * mm[i] * v_m(i, n) * adj.n(i, n);
      if (v_f.age_nodes() != 0) term += w[i] * wt[n] * mf[i] * v_f(i, n) * adj.l(i, n);
      c += term;
      c_abs += std::abs(term);
    }
  d.terminal = t1 + t2;
  d.initial = i1 + i2;
  d.control = c;
  d.residual = std::abs(d.terminal - d.initial - d.control);
  d.scale = std::abs(t1) + std::abs(t2) + std::abs(i1) + std::abs(i2) + c_abs;
  return d;
}

}  // namespace popctrl
