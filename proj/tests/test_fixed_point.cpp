#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "popctrl/errors.hpp"
#include "popctrl/fixed_point.hpp"

using namespace popctrl;
using namespace popctrl::testing;

namespace {

std::vector<double> smooth_m0(const CharGrid& g) {
  return sample_ages(g, [](double a) { return 1.0 + std::cos(M_PI * a); });
}
std::vector<double> smooth_f0(const CharGrid& g) {
  return sample_ages(g, [](double a) { return 1.2 * (1 - a) * (1 - a) + 0.3; });
}

PenaltyProblem scaled_problem(const CharGrid& g, const std::vector<double>& m0, const std::vector<double>& f0) {
  PenaltyProblem pr;
  pr.kappa = 1e-3 * (std::sqrt(age_norm2(m0, g)) + std::sqrt(age_norm2(f0, g)));
  return pr;
}

}  // namespace

TEST(FixedPoint, OptionsAreChecked) {
  FixedPointOptions o;
  EXPECT_NO_THROW(check_fixed_point_options(o));
  o.omega = 0.0;
  EXPECT_THROW(check_fixed_point_options(o), ConfigError);
  o.omega = 1.5;
  EXPECT_THROW(check_fixed_point_options(o), ConfigError);
  o = {};
  o.fp_tol = 0.0;
  EXPECT_THROW(check_fixed_point_options(o), ConfigError);
  o = {};
  o.max_outer_iters = 0;
  EXPECT_THROW(check_fixed_point_options(o), ConfigError);
}

TEST(FixedPoint, TraceNormOfConstant) {
  const auto g = build_grid(1.0, 0.5, 1.0 / 16);
  std::vector<double> c(g.time_nodes(), 3.0);
  EXPECT_NEAR(trace_norm(c, g), 3.0 * std::sqrt(0.5), 1e-13);
  const auto [sup, dot] = w_ratios(c, g, 2.0);
  EXPECT_DOUBLE_EQ(sup, 1.5);
  EXPECT_DOUBLE_EQ(dot, 0.0);
}

TEST(FixedPoint, ZeroDataConvergesImmediately) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(reference_model(), g, geom);
  const std::vector<double> zero(g.age_nodes(), 0.0);
  const auto r = iterate_to_fixed_point(s, PenaltyProblem{}, FixedPointOptions{}, zero, zero);
  EXPECT_TRUE(r.state.converged);
  ASSERT_EQ(r.state.history.size(), 1u);
  for (double y : r.state.Y) EXPECT_EQ(y, 0.0);
  EXPECT_EQ(r.nonlinear_norms.m, 0.0);
  EXPECT_TRUE(r.flags.empty());
}

TEST(FixedPoint, ZeroLambdaGivesZeroTrace) {
  auto model = reference_model();
  model.lambda = RateFunction::constant(0.0);
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(model, g, geom);
  const auto m0 = smooth_m0(g), f0 = smooth_f0(g);
  const auto r = iterate_to_fixed_point(s, scaled_problem(g, m0, f0), FixedPointOptions{}, m0, f0);
  EXPECT_TRUE(r.state.converged);
  for (double y : r.state.Y) EXPECT_EQ(y, 0.0);
  for (double p : r.state.p) EXPECT_EQ(p, 0.0);
}

TEST(FixedPoint, ReferenceScenarioConverges) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  Scheme s(reference_model(), g, geom);
  const auto m0 = smooth_m0(g), f0 = smooth_f0(g);
  const FixedPointOptions opts;
  const auto r = iterate_to_fixed_point(s, scaled_problem(g, m0, f0), opts, m0, f0);
  ASSERT_TRUE(r.state.converged);
  EXPECT_GT(r.state.history.size(), 1u);
  for (double q : r.state.delta_ratios()) EXPECT_LT(q, 1.0);

  // Stopping rule: omega ||Y - p|| <= fp_tol ||p||.
  std::vector<double> diff(r.state.p.size());
  for (std::size_t n = 0; n < diff.size(); ++n) diff[n] = r.state.Y[n] - r.state.p[n];
  EXPECT_LE(trace_norm(diff, g), opts.fp_tol / opts.omega * trace_norm(r.state.p, g) * (1 + 1e-12));

  EXPECT_LE(r.nonlinear_norms.m, 1.5 * r.frozen.terminal_m_norm);
  EXPECT_LE(r.nonlinear_norms.f, 1.5 * r.frozen.terminal_f_norm);

  // The final Lambda evaluation is the frozen solve recorded in the result.
  EXPECT_EQ(r.frozen.state.M_trace, r.state.Y);
  for (const auto& it : r.state.history) {
    EXPECT_TRUE(std::isfinite(it.y_sup_ratio));
    EXPECT_TRUE(std::isfinite(it.y_dot_ratio));
    EXPECT_GT(it.y_sup_ratio, 0.0);
  }
}

TEST(FixedPoint, IterationCapRaisesFlag) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(reference_model(), g, geom);
  const auto m0 = smooth_m0(g), f0 = smooth_f0(g);
  FixedPointOptions opts;
  opts.max_outer_iters = 2;
  const auto r = iterate_to_fixed_point(s, scaled_problem(g, m0, f0), opts, m0, f0);
  EXPECT_FALSE(r.state.converged);
  EXPECT_EQ(r.state.history.size(), 2u);
  EXPECT_NE(std::find(r.flags.begin(), r.flags.end(), kFlagFixedPointNotReached), r.flags.end());
}

TEST(FixedPoint, LambdaMapMatchesFrozenControlledSolve) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(reference_model(), g, geom);
  const auto m0 = smooth_m0(g), f0 = smooth_f0(g);
  const std::vector<double> p(g.time_nodes(), 0.4);
  PenaltyProblem pr;
  const auto ev = lambda_map(s, pr, p, m0, f0);
  const auto sol = solve_forward(s, ev.control.controls.v_m, ev.control.controls.v_f, m0, f0, PMode::frozen_trace(p));
  ASSERT_EQ(sol.M_trace.size(), ev.Y.size());
  for (std::size_t n = 0; n < ev.Y.size(); ++n) EXPECT_NEAR(sol.M_trace[n], ev.Y[n], 1e-13);
}

TEST(Contraction, ZeroFertilityGivesZeroRatios) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(transport_only_model(), g, geom);
  ContractionOptions o;
  o.trials = 8;
  const auto r = contraction_test(s, smooth_m0(g), smooth_f0(g), o);
  ASSERT_EQ(r.ratios.size(), 8u);
  for (double q : r.ratios) EXPECT_EQ(q, 0.0);
  EXPECT_TRUE(r.passed);
}

TEST(Contraction, ReferenceModelPasses) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  Scheme s(reference_model(), g, geom);
  ContractionOptions o;
  o.trials = 20;
  const auto r = contraction_test(s, smooth_m0(g), smooth_f0(g), o);
  EXPECT_GT(r.sigma_hat, 0.0);
  EXPECT_NEAR(r.bound, 1.0 / std::sqrt(2.0) + 0.1, 1e-15);
  EXPECT_LE(r.max_ratio, r.bound);
  EXPECT_TRUE(r.passed);
}

TEST(Contraction, SeededAndDeterministic) {
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(reference_model(), g, geom);
  ContractionOptions o;
  o.trials = 6;
  o.seed = 11;
  const auto a = contraction_test(s, smooth_m0(g), smooth_f0(g), o);
  const auto b = contraction_test(s, smooth_m0(g), smooth_f0(g), o);
  EXPECT_EQ(a.ratios, b.ratios);
  o.seed = 12;
  const auto c = contraction_test(s, smooth_m0(g), smooth_f0(g), o);
  EXPECT_NE(a.ratios, c.ratios);
}

TEST(Contraction, RejectsNonSeparableFertility) {
  auto model = reference_model();
  model.beta = Fertility(Expression("a*p/(1+p*a)", {"a", "p"}));
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  Scheme s(model, g, geom);
  EXPECT_THROW(contraction_test(s, smooth_m0(g), smooth_f0(g), ContractionOptions{}), ConfigError);
  ContractionOptions o;
  o.trials = 0;
  Scheme s2(reference_model(), g, geom);
  EXPECT_THROW(contraction_test(s2, smooth_m0(g), smooth_f0(g), o), ConfigError);
}
