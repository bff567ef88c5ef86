#include "popctrl/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "popctrl/errors.hpp"

namespace popctrl {

void check_fixed_point_options(const FixedPointOptions& opts) {
  if (!(opts.omega > 0.0 && opts.omega <= 1.0)) throw ConfigError("fixed_point.omega must lie in (0,1]");
  if (!(opts.fp_tol > 0.0)) throw ConfigError("fixed_point.fp_tol must be positive");
  if (opts.max_outer_iters < 1) throw ConfigError("fixed_point.max_outer_iters must be at least 1");
}

std::vector<double> FixedPointState::delta_ratios() const {
  std::vector<double> r;
  for (std::size_t k = 1; k < history.size(); ++k)
    if (history[k - 1].delta_l2 > 0.0) r.push_back(history[k].delta_l2 / history[k - 1].delta_l2);
  return r;
}

double trace_norm(std::span<const double> trace, const CharGrid& grid) {
  std::vector<double> sq(trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) sq[k] = trace[k] * trace[k];
  return std::sqrt(integrate_time(sq, grid));
}

std::pair<double, double> w_ratios(std::span<const double> Y, const CharGrid& grid, double data_norm) {
  double sup = 0.0;
  for (double y : Y) sup = std::max(sup, std::abs(y));
  double dot2 = 0.0;
  for (std::size_t k = 1; k < Y.size(); ++k) {
    const double d = (Y[k] - Y[k - 1]) / grid.h;
    dot2 += grid.h * d * d;
  }
  if (data_norm <= 0.0) return {0.0, 0.0};
  return {sup / data_norm, std::sqrt(dot2) / data_norm};
}

LambdaEvaluation lambda_map(const Scheme& scheme, const PenaltyProblem& stage, std::span<const double> p,
                            std::span<const double> m0, std::span<const double> f0, const Controls* warm_start) {
  LambdaEvaluation out;
  out.control = minimize_penalty(scheme, stage, p, m0, f0, warm_start);
  out.Y = out.control.state.M_trace;
  return out;
}

FixedPointResult iterate_to_fixed_point(const Scheme& scheme, const PenaltyProblem& problem,
                                        const FixedPointOptions& opts, std::span<const double> m0,
                                        std::span<const double> f0) {
  check_problem(problem);
  check_fixed_point_options(opts);
  const CharGrid& g = scheme.grid();
  FixedPointResult res;
  FixedPointState& st = res.state;
  st.omega = opts.omega;

  const double data_norm = std::sqrt(age_norm2(m0, g)) + std::sqrt(age_norm2(f0, g));
  std::vector<double> p = solve_forward(scheme, Field2D(), Field2D(), m0, f0, PMode::nonlinear()).M_trace;

  res.initial = synthesize_null_control(scheme, problem, p, m0, f0);
  PenaltyProblem stage = problem;
  stage.epsilon = res.initial.result.epsilon;
  stage.theta = res.initial.result.theta;
  st.epsilon = stage.epsilon;
  st.theta = stage.theta;

  Controls warm = res.initial.result.controls;
  for (int k = 0; k < opts.max_outer_iters; ++k) {
    LambdaEvaluation ev = lambda_map(scheme, stage, p, m0, f0, &warm);
    warm = ev.control.controls;

    FixedPointIterate it;
    it.iteration = k;
    it.p_norm = trace_norm(p, g);
    std::vector<double> step(p.size());
    for (std::size_t n = 0; n < p.size(); ++n) step[n] = opts.omega * (ev.Y[n] - p[n]);
    it.delta_l2 = trace_norm(step, g);
    for (double s : step) it.delta_sup = std::max(it.delta_sup, std::abs(s));
    it.terminal_m = ev.control.terminal_m_norm;
    it.terminal_f = ev.control.terminal_f_norm;
    it.cg_iterations = ev.control.iterations;
    std::tie(it.y_sup_ratio, it.y_dot_ratio) = w_ratios(ev.Y, g, data_norm);
    st.history.push_back(it);

    st.p = p;
    st.Y = ev.Y;
    res.frozen = std::move(ev.control);
    if (it.delta_l2 <= opts.fp_tol * it.p_norm) {
      st.converged = true;
      break;
    }
    for (std::size_t n = 0; n < p.size(); ++n) p[n] += step[n];
  }

  res.flags = res.frozen.flags;
  if (res.initial.result.has_flag(kFlagTargetNotReached)) res.flags.push_back(kFlagTargetNotReached);
  if (!st.converged) res.flags.push_back(kFlagFixedPointNotReached);

  res.nonlinear = solve_forward(scheme, res.frozen.controls.v_m, res.frozen.controls.v_f, m0, f0, PMode::nonlinear());
  res.nonlinear_norms = terminal_norms(scheme, res.nonlinear);
  return res;
}

namespace {

double sampled_sup(const RateFunction& f, double lo, double hi, int samples) {
  double s = 0.0;
  for (int k = 0; k < samples; ++k) s = std::max(s, std::abs(f(lo + (hi - lo) * k / (samples - 1))));
  return s;
}

// sum_n w^t_n e^{-2 sigma t_n} ||a(t_n) - b(t_n)||^2_{L2(0,A)}
double weighted_distance2(const Field2D& a, const Field2D& b, const CharGrid& g, std::span<const double> wt,
                          double sigma) {
  double d2 = 0.0;
  std::vector<double> diff(g.age_nodes());
  for (int n = 0; n <= g.Nt; ++n) {
    for (int i = 0; i <= g.Na; ++i) diff[i] = a(i, n) - b(i, n);
    d2 += wt[n] * std::exp(-2.0 * sigma * g.time(n)) * age_norm2(diff, g);
  }
  return d2;
}

}  // namespace

ContractionReport contraction_test(const Scheme& scheme, std::span<const double> m0, std::span<const double> f0,
                                   const ContractionOptions& opts) {
  const DemographicModel& model = scheme.model();
  const auto& sep = model.beta.separable_form();
  if (opts.trials < 1) throw ConfigError("contraction trials must be at least 1");
  const CharGrid& g = scheme.grid();
  const int samples = 4 * g.Na + 1;

  ContractionReport rep;
  rep.lambda_sup = sampled_sup(model.lambda, 0.0, g.A, samples);
  rep.beta1_sup = sampled_sup(sep.age_profile, 0.0, g.A, samples);
  rep.beta2_sup = sampled_sup(sep.response, 0.0, opts.p_max, 1025);
  rep.lipschitz = sep.response_lipschitz;
  rep.sigma_hat = std::max(2.0 * rep.lipschitz * rep.lipschitz * g.A * rep.lambda_sup * rep.lambda_sup,
                           2.0 * rep.beta1_sup * rep.beta1_sup * rep.beta2_sup * rep.beta2_sup * g.A);
  rep.bound = 1.0 / std::sqrt(2.0) + opts.tolerance;

  const auto& wt = scheme.time_weights();
  const auto& lam = scheme.lambda_nodes();
  const auto& w = scheme.age_weights();
  auto trace_of = [&](const Field2D& field) {
    std::vector<double> P(g.time_nodes(), 0.0);
    for (int n = 0; n <= g.Nt; ++n)
      for (int i = 0; i <= g.Na; ++i) P[n] += w[i] * lam[i] * field(i, n);
    return P;
  };

  std::vector<double> ratio(opts.trials, -1.0);
  std::vector<int> failed(opts.trials, 0);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < opts.trials; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> dist(0.0, opts.field_scale);
    Field2D p(g), q(g);
    for (auto& v : p.values()) v = dist(rng);
    for (auto& v : q.values()) v = dist(rng);
    const double dpq = weighted_distance2(p, q, g, wt, rep.sigma_hat);
    if (dpq == 0.0) continue;
    try {
      const auto mp = solve_forward(scheme, Field2D(), Field2D(), m0, f0, PMode::frozen_trace(trace_of(p)));
      const auto mq = solve_forward(scheme, Field2D(), Field2D(), m0, f0, PMode::frozen_trace(trace_of(q)));
      ratio[t] = std::sqrt(weighted_distance2(mp.m, mq.m, g, wt, rep.sigma_hat) / dpq);
    } catch (const Error&) {
      failed[t] = 1;
    }
  }
  for (int t = 0; t < opts.trials; ++t) {
    if (failed[t]) throw NumericalError("contraction trial failed", t);
    if (ratio[t] < 0.0) {
      ++rep.skipped;
      continue;
    }
    rep.ratios.push_back(ratio[t]);
    rep.max_ratio = std::max(rep.max_ratio, ratio[t]);
  }
  rep.passed = rep.max_ratio <= rep.bound;
  return rep;
}

}  // namespace popctrl
