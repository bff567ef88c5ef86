#include "popctrl/control.hpp"

#include <algorithm>
#include <cmath>

#include "popctrl/errors.hpp"

namespace popctrl {

namespace {

std::vector<double> terminal_mask(const Scheme& scheme) {
  const CharGrid& g = scheme.grid();
  const ControlGeometry& geom = scheme.geometry();
  if (geom.mode == ControlMode::MaleOnly && geom.rho > 0.0) return region_mask(g, geom.rho, g.A);
  return std::vector<double>(g.age_nodes(), 1.0);
}

double weighted_square(std::span<const double> q, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * x[i] * x[i];
  return s;
}

void check_mode(const Scheme& scheme, const PenaltyProblem& problem) {
  if (scheme.geometry().mode != problem.mode)
    throw ConsistencyError("penalty mode " + to_string(problem.mode) + " differs from geometry mode " +
                           to_string(scheme.geometry().mode));
}

// x += a * y on both components
void axpy(Controls& x, double a, const Controls& y) {
  auto xm = x.v_m.values(), xf = x.v_f.values();
  const auto ym = y.v_m.values(), yf = y.v_f.values();
  for (std::size_t k = 0; k < xm.size(); ++k) xm[k] += a * ym[k];
  for (std::size_t k = 0; k < xf.size(); ++k) xf[k] += a * yf[k];
}

// x = y + b * x
void xpby(Controls& x, const Controls& y, double b) {
  auto xm = x.v_m.values(), xf = x.v_f.values();
  const auto ym = y.v_m.values(), yf = y.v_f.values();
  for (std::size_t k = 0; k < xm.size(); ++k) xm[k] = ym[k] + b * xm[k];
  for (std::size_t k = 0; k < xf.size(); ++k) xf[k] = yf[k] + b * xf[k];
}

// Zero outside the control support.
void project(const Scheme& scheme, Controls& v) {
  const CharGrid& g = scheme.grid();
  const auto& mm = scheme.support().male;
  const auto& mf = scheme.support().female;
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 0; i <= g.Na; ++i) {
      if (mm[i] == 0.0) v.v_m(i, n) = 0.0;
      if (mf[i] == 0.0) v.v_f(i, n) = 0.0;
    }
}

struct Evaluation {
  StateSolution state;
  double J = 0.0;
};

Evaluation evaluate(const Scheme& scheme, const PenaltyWeights& pw, std::span<const double> p,
                    std::span<const double> m0, std::span<const double> f0, const Controls& v) {
  Evaluation e;
  e.state = solve_forward(scheme, v.v_m, v.v_f, m0, f0, PMode::frozen_trace({p.begin(), p.end()}));
  const int Nt = scheme.grid().Nt;
  e.J = 0.5 * control_inner(scheme, v, v) + 0.5 * pw.c_m * weighted_square(pw.q_m, e.state.m.level(Nt)) +
        0.5 * pw.c_f * weighted_square(pw.q_f, e.state.f.level(Nt));
  return e;
}

// Adjoint fields for the terminal penalty of a state.
AdjointSolution penalty_adjoint(const Scheme& scheme, const PenaltyWeights& pw, std::span<const double> p,
                                const StateSolution& state) {
  const CharGrid& g = scheme.grid();
  std::vector<double> nT(g.age_nodes()), lT(g.age_nodes());
  const auto mT = state.m.level(g.Nt);
  const auto fT = state.f.level(g.Nt);
  for (int i = 0; i <= g.Na; ++i) {
    nT[i] = -pw.c_m * pw.q_m[i] / g.h * mT[i];
    lT[i] = -pw.c_f * pw.q_f[i] / g.h * fT[i];
  }
  return solve_adjoint(scheme, nT, lT, p, AdjointMode::Coupled);
}

// The part of the Hessian beyond identity, as (-n, -l) on the support.
Controls hessian_apply(const Scheme& scheme, const PenaltyWeights& pw, std::span<const double> p,
                       std::span<const double> zero, const Controls& d) {
  const StateSolution s = solve_forward(scheme, d.v_m, d.v_f, zero, zero, PMode::frozen_trace({p.begin(), p.end()}));
  const AdjointSolution adj = penalty_adjoint(scheme, pw, p, s);
  Controls out{d.v_m, d.v_f};
  auto om = out.v_m.values(), of = out.v_f.values();
  const auto an = adj.n.values(), al = adj.l.values();
  for (std::size_t k = 0; k < om.size(); ++k) {
    om[k] -= an[k];
    of[k] -= al[k];
  }
  project(scheme, out);
  return out;
}

Controls gradient_from(const Scheme& scheme, const PenaltyWeights& pw, std::span<const double> p,
                       const StateSolution& state, const Controls& v) {
  const AdjointSolution adj = penalty_adjoint(scheme, pw, p, state);
  Controls g{v.v_m, v.v_f};
  auto gm = g.v_m.values(), gf = g.v_f.values();
  const auto an = adj.n.values(), al = adj.l.values();
  for (std::size_t k = 0; k < gm.size(); ++k) {
    gm[k] -= an[k];
    gf[k] -= al[k];
  }
  project(scheme, g);
  return g;
}

void check_inputs(const Scheme& scheme, std::span<const double> p, const Controls& v) {
  const CharGrid& g = scheme.grid();
  if (static_cast<int>(p.size()) != g.time_nodes())
    throw DimensionError("frozen trace has " + std::to_string(p.size()) + " entries, grid has " +
                         std::to_string(g.time_nodes()) + " time levels");
  if (!v.v_m.matches(g) || !v.v_f.matches(g)) throw DimensionError("controls do not match the grid");
}

}  // namespace

void check_problem(const PenaltyProblem& pr) {
  if (!(pr.epsilon > 0.0)) throw ConfigError("penalty.epsilon must be positive");
  if (!(pr.theta > 0.0)) throw ConfigError("penalty.theta must be positive");
  if (!(pr.kappa > 0.0)) throw ConfigError("penalty.kappa must be positive");
  if (pr.kappa_f && !(*pr.kappa_f > 0.0)) throw ConfigError("penalty.kappa_f must be positive");
  if (pr.max_cg_iters < 1) throw ConfigError("penalty.max_cg_iters must be at least 1");
  if (!(pr.cg_tol > 0.0 && pr.cg_tol < 1.0)) throw ConfigError("penalty.cg_tol must lie in (0,1)");
  if (!(pr.schedule_eps0 > 0.0)) throw ConfigError("penalty.schedule.eps0 must be positive");
  if (!(pr.schedule_ratio > 1.0)) throw ConfigError("penalty.schedule.ratio must exceed 1");
  if (pr.schedule_stages < 1) throw ConfigError("penalty.schedule.stages must be at least 1");
}

Controls zero_controls(const CharGrid& grid) { return {Field2D(grid), Field2D(grid)}; }

PenaltyWeights penalty_weights(const Scheme& scheme, const PenaltyProblem& problem) {
  check_mode(scheme, problem);
  const auto& w = scheme.age_weights();
  const auto mask = terminal_mask(scheme);
  PenaltyWeights pw;
  pw.q_m.resize(w.size());
  pw.q_f = w;
  for (std::size_t i = 0; i < w.size(); ++i) pw.q_m[i] = w[i] * mask[i];
  switch (problem.mode) {
    case ControlMode::Both:
      pw.c_m = 1.0 / problem.epsilon;
      pw.c_f = 1.0 / problem.theta;
      break;
    case ControlMode::MaleOnly:
      pw.c_m = 1.0 / problem.epsilon;
      break;
    case ControlMode::FemaleOnly:
      pw.c_f = 1.0 / problem.epsilon;
      break;
  }
  return pw;
}

TerminalNorms terminal_norms(const Scheme& scheme, const StateSolution& sol) {
  const auto& w = scheme.age_weights();
  const auto mask = terminal_mask(scheme);
  std::vector<double> q(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q[i] = w[i] * mask[i];
  const int Nt = scheme.grid().Nt;
  return {std::sqrt(weighted_square(q, sol.m.level(Nt))), std::sqrt(weighted_square(w, sol.f.level(Nt)))};
}

double control_inner(const Scheme& scheme, const Controls& u, const Controls& v) {
  const CharGrid& g = scheme.grid();
  const auto& w = scheme.age_weights();
  const auto& wt = scheme.time_weights();
  const auto& mm = scheme.support().male;
  const auto& mf = scheme.support().female;
  double s = 0.0;
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 1; i <= g.Na; ++i) {
      const double W = w[i] * wt[n];
      s += W * (mm[i] * u.v_m(i, n) * v.v_m(i, n) + mf[i] * u.v_f(i, n) * v.v_f(i, n));
    }
  return s;
}

double evaluate_J(const Scheme& scheme, const PenaltyProblem& problem, std::span<const double> p,
                  std::span<const double> m0, std::span<const double> f0, const Controls& v) {
  check_problem(problem);
  check_inputs(scheme, p, v);
  return evaluate(scheme, penalty_weights(scheme, problem), p, m0, f0, v).J;
}

Controls gradient_J(const Scheme& scheme, const PenaltyProblem& problem, std::span<const double> p,
                    std::span<const double> m0, std::span<const double> f0, const Controls& v) {
  check_problem(problem);
  check_inputs(scheme, p, v);
  const auto pw = penalty_weights(scheme, problem);
  const auto e = evaluate(scheme, pw, p, m0, f0, v);
  return gradient_from(scheme, pw, p, e.state, v);
}

bool ControlResult::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

ControlResult minimize_penalty(const Scheme& scheme, const PenaltyProblem& problem, std::span<const double> p,
                               std::span<const double> m0, std::span<const double> f0,
                               const Controls* warm_start) {
  check_problem(problem);
  const CharGrid& g = scheme.grid();
  const auto pw = penalty_weights(scheme, problem);
  const std::vector<double> zero(g.age_nodes(), 0.0);

  Controls x = warm_start ? *warm_start : zero_controls(g);
  check_inputs(scheme, p, x);
  project(scheme, x);

  ControlResult res;
  res.epsilon = problem.epsilon;
  res.theta = problem.theta;
  if (!admissible_time(scheme.geometry(), g.A)) res.flags.push_back(kFlagNonAdmissible);

  Evaluation e = evaluate(scheme, pw, p, m0, f0, x);
  Controls r = gradient_from(scheme, pw, p, e.state, x);
  // residual of H x = b is minus the gradient
  for (auto& v : r.v_m.values()) v = -v;
  for (auto& v : r.v_f.values()) v = -v;
  double rr = control_inner(scheme, r, r);
  const double r0 = std::sqrt(rr);
  res.cg_trace.push_back(1.0);
  const double stop = problem.cg_tol * r0;

  Controls d = r;
  int it = 0;
  bool converged = r0 == 0.0;
  while (!converged && it < problem.max_cg_iters) {
    const Controls Hd = hessian_apply(scheme, pw, p, zero, d);
    const double dHd = control_inner(scheme, d, Hd);
    if (!(dHd > 0.0)) break;
    const double alpha = rr / dHd;
    axpy(x, alpha, d);
    axpy(r, -alpha, Hd);
    const double rr_new = control_inner(scheme, r, r);
    ++it;
    res.cg_trace.push_back(std::sqrt(rr_new) / r0);
    if (std::sqrt(rr_new) <= stop) {
      converged = true;
      break;
    }
    xpby(d, r, rr_new / rr);
    rr = rr_new;
  }
  res.iterations = it;
  if (!converged) res.flags.push_back(kFlagConvergenceNotReached);

  e = evaluate(scheme, pw, p, m0, f0, x);
  const auto norms = terminal_norms(scheme, e.state);
  res.terminal_m_norm = norms.m;
  res.terminal_f_norm = norms.f;
  res.J_value = e.J;
  res.controls = std::move(x);
  res.state = std::move(e.state);
  return res;
}

bool meets_target(const PenaltyProblem& problem, double m_norm, double f_norm) {
  switch (problem.mode) {
    case ControlMode::Both:
      return m_norm <= problem.kappa && f_norm <= problem.female_tolerance();
    case ControlMode::MaleOnly:
      return m_norm <= problem.kappa;
    case ControlMode::FemaleOnly:
      return f_norm <= problem.kappa;
  }
  return false;
}

NullControlResult synthesize_null_control(const Scheme& scheme, const PenaltyProblem& problem,
                                          std::span<const double> p, std::span<const double> m0,
                                          std::span<const double> f0) {
  check_problem(problem);
  const CharGrid& g = scheme.grid();
  NullControlResult out;

  const auto free_state = solve_forward(scheme, Field2D(), Field2D(), m0, f0, PMode::frozen_trace({p.begin(), p.end()}));
  out.uncontrolled = terminal_norms(scheme, free_state);

  PenaltyProblem stage = problem;
  const double theta_over_eps = problem.theta / problem.epsilon;
  if (meets_target(problem, out.uncontrolled.m, out.uncontrolled.f)) {
    ControlResult& r = out.result;
    stage.epsilon = problem.schedule_eps0;
    stage.theta = problem.schedule_eps0 * theta_over_eps;
    r.controls = zero_controls(g);
    r.epsilon = stage.epsilon;
    r.theta = stage.theta;
    r.terminal_m_norm = out.uncontrolled.m;
    r.terminal_f_norm = out.uncontrolled.f;
    r.J_value = evaluate(scheme, penalty_weights(scheme, stage), p, m0, f0, r.controls).J;
    r.cg_trace = {1.0};
    r.state = free_state;
    if (!admissible_time(scheme.geometry(), g.A)) r.flags.push_back(kFlagNonAdmissible);
    out.stages.push_back({stage.epsilon, stage.theta, r.terminal_m_norm, r.terminal_f_norm, r.J_value, 0, true});
    out.reached = true;
    return out;
  }

  Controls warm = zero_controls(g);
  for (int k = 0; k < problem.schedule_stages; ++k) {
    stage.epsilon = problem.schedule_eps0 / std::pow(problem.schedule_ratio, k);
    stage.theta = stage.epsilon * theta_over_eps;
    ControlResult r = minimize_penalty(scheme, stage, p, m0, f0, &warm);
    out.stages.push_back({stage.epsilon, stage.theta, r.terminal_m_norm, r.terminal_f_norm, r.J_value,
                          r.iterations, !r.has_flag(kFlagConvergenceNotReached)});
    warm = r.controls;
    out.result = std::move(r);
    if (meets_target(problem, out.result.terminal_m_norm, out.result.terminal_f_norm)) {
      out.reached = true;
      return out;
    }
  }
  out.result.flags.push_back(kFlagTargetNotReached);
  return out;
}

}  // namespace popctrl
