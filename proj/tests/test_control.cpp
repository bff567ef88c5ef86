#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "popctrl/control.hpp"
#include "popctrl/errors.hpp"

using namespace popctrl;
using namespace popctrl::testing;

namespace {

struct Setup {
  CharGrid grid;
  Scheme scheme;
  std::vector<double> p, m0, f0;
};

Setup make_setup(ControlGeometry geom, double h = 1.0 / 32) {
  const auto model = reference_model();
  const auto g = build_grid(1.0, geom.T, h);
  Scheme s(model, g, geom);
  auto m0 = sample_ages(g, [](double a) { return 1.0 + std::cos(M_PI * a); });
  auto f0 = sample_ages(g, [](double a) { return 1.2 * (1 - a) * (1 - a) + 0.3; });
  auto p = solve_forward(s, Field2D(), Field2D(), m0, f0, PMode::nonlinear()).M_trace;
  return {g, std::move(s), std::move(p), std::move(m0), std::move(f0)};
}

Controls random_controls(std::mt19937_64& rng, const CharGrid& g) {
  return {random_field(rng, g, -1, 1), random_field(rng, g, -1, 1)};
}

PenaltyProblem problem_for(const ControlGeometry& geom, double eps) {
  PenaltyProblem pr;
  pr.mode = geom.mode;
  pr.epsilon = pr.theta = eps;
  return pr;
}

}  // namespace

TEST(EvaluateJ, ZeroEverythingIsZero) {
  auto st = make_setup(reference_geometry());
  const std::vector<double> z(st.grid.age_nodes(), 0.0);
  const auto pr = problem_for(reference_geometry(), 1e-2);
  EXPECT_EQ(evaluate_J(st.scheme, pr, st.p, z, z, zero_controls(st.grid)), 0.0);
  const auto g = gradient_J(st.scheme, pr, st.p, z, z, zero_controls(st.grid));
  for (double v : g.v_m.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.v_f.values()) EXPECT_EQ(v, 0.0);
  const auto res = minimize_penalty(st.scheme, pr, st.p, z, z);
  EXPECT_EQ(res.J_value, 0.0);
  EXPECT_EQ(res.iterations, 0);
}

TEST(EvaluateJ, UncontrolledValueMatchesDirectSolve) {
  auto st = make_setup(reference_geometry());
  const auto pr = problem_for(reference_geometry(), 1e-2);
  const auto sol = solve_forward(st.scheme, Field2D(), Field2D(), st.m0, st.f0, PMode::frozen_trace(st.p));
  const int Nt = st.grid.Nt;
  std::vector<double> m2(st.grid.age_nodes()), f2(st.grid.age_nodes());
  for (int i = 0; i <= st.grid.Na; ++i) {
    m2[i] = sol.m(i, Nt) * sol.m(i, Nt);
    f2[i] = sol.f(i, Nt) * sol.f(i, Nt);
  }
  const double expected = integrate_age(m2, st.grid) / (2 * 1e-2) + integrate_age(f2, st.grid) / (2 * 1e-2);
  EXPECT_NEAR(evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, zero_controls(st.grid)), expected, 1e-12 * expected);
}

TEST(EvaluateJ, ConvexAlongSegments) {
  auto st = make_setup(reference_geometry());
  const auto pr = problem_for(reference_geometry(), 1e-3);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_controls(rng, st.grid), y = random_controls(rng, st.grid);
    const double Jx = evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, x);
    const double Jy = evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, y);
    for (double t : {0.1, 0.35, 0.5, 0.9}) {
      Controls z{Field2D(st.grid), Field2D(st.grid)};
      for (std::size_t k = 0; k < z.v_m.values().size(); ++k) {
        z.v_m.values()[k] = t * x.v_m.values()[k] + (1 - t) * y.v_m.values()[k];
        z.v_f.values()[k] = t * x.v_f.values()[k] + (1 - t) * y.v_f.values()[k];
      }
      EXPECT_LE(evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, z), t * Jx + (1 - t) * Jy + 1e-10);
    }
  }
}

TEST(GradientJ, MatchesCentralDifferences) {
  for (auto mode : {ControlMode::Both, ControlMode::MaleOnly, ControlMode::FemaleOnly}) {
    auto geom = reference_geometry();
    geom.mode = mode;
    geom.rho = 0.05;
    auto st = make_setup(geom, 1.0 / 16);
    const auto pr = problem_for(geom, 1e-2);
    std::mt19937_64 rng(40 + static_cast<int>(mode));
    const auto v = random_controls(rng, st.grid);
    const auto dir = random_controls(rng, st.grid);
    const auto g = gradient_J(st.scheme, pr, st.p, st.m0, st.f0, v);
    const double analytic = control_inner(st.scheme, g, dir);
    const double step = 1e-5;
    Controls plus = v, minus = v;
    for (std::size_t k = 0; k < v.v_m.values().size(); ++k) {
      plus.v_m.values()[k] += step * dir.v_m.values()[k];
      plus.v_f.values()[k] += step * dir.v_f.values()[k];
      minus.v_m.values()[k] -= step * dir.v_m.values()[k];
      minus.v_f.values()[k] -= step * dir.v_f.values()[k];
    }
    const double fd = (evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, plus) -
                       evaluate_J(st.scheme, pr, st.p, st.m0, st.f0, minus)) /
                      (2 * step);
    EXPECT_NEAR(analytic, fd, 1e-7 * std::abs(fd)) << to_string(mode);
  }
}

TEST(Minimize, StationaryAndSupportedOnWindows) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  const auto pr = problem_for(geom, 1e-3);
  const auto res = minimize_penalty(st.scheme, pr, st.p, st.m0, st.f0);
  EXPECT_FALSE(res.has_flag(kFlagConvergenceNotReached));
  EXPECT_FALSE(res.has_flag(kFlagNonAdmissible));
  const auto g0 = gradient_J(st.scheme, pr, st.p, st.m0, st.f0, zero_controls(st.grid));
  const auto g = gradient_J(st.scheme, pr, st.p, st.m0, st.f0, res.controls);
  // CG tracks the recursive residual; the true gradient agrees up to rounding drift.
  EXPECT_LE(std::sqrt(control_inner(st.scheme, g, g)), 1e-8 * std::sqrt(control_inner(st.scheme, g0, g0)));
  const auto& mm = st.scheme.support().male;
  const auto& mf = st.scheme.support().female;
  for (int n = 0; n <= st.grid.Nt; ++n)
    for (int i = 0; i <= st.grid.Na; ++i) {
      if (mm[i] == 0.0) EXPECT_EQ(res.controls.v_m(i, n), 0.0);
      if (mf[i] == 0.0) EXPECT_EQ(res.controls.v_f(i, n), 0.0);
    }
}

TEST(Minimize, OptimalControlIsTheAdjointOnTheWindow) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  const auto pr = problem_for(geom, 1e-2);
  const auto res = minimize_penalty(st.scheme, pr, st.p, st.m0, st.f0);
  const auto& g = st.grid;
  std::vector<double> nT(g.age_nodes()), lT(g.age_nodes());
  const auto w = age_weights(g);
  for (int i = 0; i <= g.Na; ++i) {
    nT[i] = -w[i] / g.h * res.state.m(i, g.Nt) / pr.epsilon;
    lT[i] = -w[i] / g.h * res.state.f(i, g.Nt) / pr.theta;
  }
  const auto adj = solve_adjoint(st.scheme, nT, lT, st.p);
  double scale = 0.0;
  for (double v : adj.n.values()) scale = std::max(scale, std::abs(v));
  const auto& mm = st.scheme.support().male;
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 0; i <= g.Na; ++i)
      if (mm[i] > 0.0) EXPECT_NEAR(res.controls.v_m(i, n), adj.n(i, n), 1e-7 * scale);
}

TEST(Minimize, PenaltyMinimumGrowsAsWeightsTighten) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  double prev = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const auto res = minimize_penalty(st.scheme, problem_for(geom, eps), st.p, st.m0, st.f0);
    EXPECT_GE(res.J_value, prev * (1 - 1e-12));
    prev = res.J_value;
  }
}

TEST(Minimize, IterationCapFlagsResult) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  auto pr = problem_for(geom, 1e-4);
  pr.max_cg_iters = 2;
  const auto res = minimize_penalty(st.scheme, pr, st.p, st.m0, st.f0);
  EXPECT_TRUE(res.has_flag(kFlagConvergenceNotReached));
  EXPECT_EQ(res.iterations, 2);
}

TEST(Minimize, NonAdmissibleTimeIsFlagged) {
  const auto geom = reference_geometry(0.25);
  auto st = make_setup(geom);
  const auto res = minimize_penalty(st.scheme, problem_for(geom, 1e-2), st.p, st.m0, st.f0);
  EXPECT_TRUE(res.has_flag(kFlagNonAdmissible));
}

TEST(Minimize, MaleOnlyLeavesFemalesUncontrolledAndMeasuresTail) {
  auto geom = reference_geometry(0.15);
  geom.mode = ControlMode::MaleOnly;
  geom.rho = 0.05;
  auto st = make_setup(geom);
  const auto res = minimize_penalty(st.scheme, problem_for(geom, 1e-3), st.p, st.m0, st.f0);
  for (double v : res.controls.v_f.values()) EXPECT_EQ(v, 0.0);
  std::vector<double> tail(st.grid.age_nodes());
  const auto mask = region_mask(st.grid, 0.05, 1.0);
  for (int i = 0; i <= st.grid.Na; ++i) tail[i] = mask[i] * res.state.m(i, st.grid.Nt) * res.state.m(i, st.grid.Nt);
  EXPECT_NEAR(res.terminal_m_norm, std::sqrt(integrate_age(tail, st.grid)), 1e-14);
}

TEST(Minimize, ModeMismatchIsConsistencyError) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  auto pr = problem_for(geom, 1e-2);
  pr.mode = ControlMode::FemaleOnly;
  EXPECT_THROW(minimize_penalty(st.scheme, pr, st.p, st.m0, st.f0), ConsistencyError);
}

TEST(Synthesize, LooseToleranceNeedsNoIterations) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  auto pr = problem_for(geom, 1e-2);
  pr.kappa = 10.0;
  const auto out = synthesize_null_control(st.scheme, pr, st.p, st.m0, st.f0);
  EXPECT_TRUE(out.reached);
  EXPECT_EQ(out.result.iterations, 0);
  ASSERT_EQ(out.stages.size(), 1u);
  for (double v : out.result.controls.v_m.values()) EXPECT_EQ(v, 0.0);
}

TEST(Synthesize, UnreachableToleranceIsFlagged) {
  const auto geom = reference_geometry();
  auto st = make_setup(geom);
  auto pr = problem_for(geom, 1e-2);
  pr.kappa = 1e-12;
  pr.schedule_stages = 2;
  const auto out = synthesize_null_control(st.scheme, pr, st.p, st.m0, st.f0);
  EXPECT_FALSE(out.reached);
  EXPECT_TRUE(out.result.has_flag(kFlagTargetNotReached));
  EXPECT_EQ(out.stages.size(), 2u);
  EXPECT_DOUBLE_EQ(out.stages[1].epsilon, 1e-3);
}

TEST(Problem, RejectsBadWeights) {
  PenaltyProblem pr;
  pr.epsilon = 0.0;
  EXPECT_THROW(check_problem(pr), ConfigError);
  pr = PenaltyProblem{};
  pr.kappa = -1;
  EXPECT_THROW(check_problem(pr), ConfigError);
}
