#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "popctrl/errors.hpp"
#include "popctrl/forward.hpp"

using namespace popctrl;
using namespace popctrl::testing;

namespace {

std::vector<double> zeros(const CharGrid& g) { return std::vector<double>(g.age_nodes(), 0.0); }

// pi(a) for mu = 0.2 + 0.3 a^2 (reference male mortality), closed form.
double pi_m(double a) { return std::exp(-(0.2 * a + 0.1 * a * a * a)); }

double smooth_m0(double a) { return std::sin(M_PI * a) * std::sin(M_PI * a) * (1.0 + a); }

}  // namespace

TEST(Forward, ZeroDataGivesZeroSolution) {
  const auto model = reference_model();
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  const auto sol = solve_forward(model, g, geom, Field2D(), Field2D(), zeros(g), zeros(g), PMode::nonlinear());
  for (double v : sol.m.values()) EXPECT_EQ(v, 0.0);
  for (double v : sol.f.values()) EXPECT_EQ(v, 0.0);
  for (double v : sol.M_trace) EXPECT_EQ(v, 0.0);
  for (double v : sol.N_trace) EXPECT_EQ(v, 0.0);
}

TEST(Forward, TransportMatchesCharacteristicSolutionAtNodes) {
  const auto model = transport_only_model();
  ControlGeometry geom = reference_geometry(0.6);
  const auto g = build_grid(1.0, geom.T, 1.0 / 64);
  const auto m0 = sample_ages(g, smooth_m0);
  const auto sol = solve_forward(model, g, geom, Field2D(), Field2D(), m0, zeros(g), PMode::nonlinear());
  double worst = 0.0;
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 0; i < g.Na; ++i) {
      const double a = g.age(i);
      const double exact = i >= n ? smooth_m0(g.age(i - n)) * pi_m(a) / pi_m(g.age(i - n)) : 0.0;
      worst = std::max(worst, std::abs(sol.m(i, n) - exact));
    }
  // Nodes sit on characteristics; only the survival quadrature is inexact.
  EXPECT_LT(worst, 1e-8);
}

TEST(Forward, EqualSexRatioGivesEqualNewborns) {
  auto model = reference_model();
  model.gamma = 0.5;
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  std::mt19937_64 rng(11);
  const auto m0 = random_nodes(rng, g.age_nodes(), 0.0, 1.0);
  const auto f0 = random_nodes(rng, g.age_nodes(), 0.0, 1.0);
  const auto sol = solve_forward(model, g, geom, Field2D(), Field2D(), m0, f0, PMode::nonlinear());
  for (int n = 1; n <= g.Nt; ++n) {
    EXPECT_EQ(sol.m(0, n), sol.f(0, n));
    EXPECT_GT(sol.N_trace[n], 0.0);
  }
}

TEST(Forward, BoundaryRelationsHoldFromLevelOne) {
  auto model = reference_model();
  model.gamma = 0.3;
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  std::mt19937_64 rng(5);
  const auto m0 = random_nodes(rng, g.age_nodes(), 0.0, 1.0);
  const auto f0 = random_nodes(rng, g.age_nodes(), 0.0, 1.0);
  const auto sol = solve_forward(model, g, geom, random_field(rng, g, 0, 1), random_field(rng, g, 0, 1), m0,
                                 f0, PMode::nonlinear());
  for (int n = 1; n <= g.Nt; ++n) {
    EXPECT_NEAR(sol.m(0, n) / 0.7, sol.N_trace[n], 1e-13 * sol.N_trace[n]);
    EXPECT_NEAR(sol.f(0, n) / 0.3, sol.N_trace[n], 1e-13 * sol.N_trace[n]);
    // births use beta at the same-level M
    EXPECT_DOUBLE_EQ(sol.p_used[n], sol.M_trace[n]);
  }
}

TEST(Forward, BirthsAtAgeZeroUseClosedBoundary) {
  // beta(0, p) != 0 (cutoff disabled): N must satisfy N = int beta f with f(0) = gamma N.
  auto model = reference_model();
  model.apply_onset_cutoff = false;
  SeparableFertility s;
  s.age_profile = RateFunction::constant(1.5);
  s.response = RateFunction::expr("p/(1+p)", "p");
  model.beta = Fertility(s);
  model.lambda = RateFunction::expr("1 + a", "a");
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 16);
  std::mt19937_64 rng(2);
  const auto sol = solve_forward(model, g, geom, Field2D(), Field2D(), random_nodes(rng, g.age_nodes(), 0, 1),
                                 random_nodes(rng, g.age_nodes(), 0, 1), PMode::nonlinear());
  const auto w = age_weights(g);
  for (int n = 1; n <= g.Nt; ++n) {
    double births = 0.0;
    for (int i = 0; i <= g.Na; ++i) births += w[i] * beta_eval(model, g.age(i), sol.p_used[n]) * sol.f(i, n);
    EXPECT_NEAR(births, sol.N_trace[n], 1e-12 * births);
  }
}

TEST(Forward, PositivityOnRandomNonnegativeInputs) {
  const auto model = reference_model();
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sol = solve_forward(model, g, geom, random_field(rng, g, 0, 2), random_field(rng, g, 0, 2),
                                   random_nodes(rng, g.age_nodes(), 0, 3), random_nodes(rng, g.age_nodes(), 0, 3),
                                   PMode::nonlinear());
    EXPECT_GE(*std::min_element(sol.m.values().begin(), sol.m.values().end()), 0.0);
    EXPECT_GE(*std::min_element(sol.f.values().begin(), sol.f.values().end()), 0.0);
    EXPECT_GE(*std::min_element(sol.M_trace.begin(), sol.M_trace.end()), 0.0);
    EXPECT_GE(*std::min_element(sol.N_trace.begin(), sol.N_trace.end()), 0.0);
  }
}

TEST(Forward, FrozenModeIsAffine) {
  const auto model = reference_model();
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  const Scheme scheme(model, g, geom);
  std::mt19937_64 rng(17);
  const auto p = random_nodes(rng, g.time_nodes(), 0.0, 2.0);
  const auto xm = random_nodes(rng, g.age_nodes(), -1, 1), xf = random_nodes(rng, g.age_nodes(), -1, 1);
  const auto ym = random_nodes(rng, g.age_nodes(), -1, 1), yf = random_nodes(rng, g.age_nodes(), -1, 1);
  const auto xvm = random_field(rng, g, -1, 1), xvf = random_field(rng, g, -1, 1);
  const auto yvm = random_field(rng, g, -1, 1), yvf = random_field(rng, g, -1, 1);
  std::vector<double> sm(xm.size()), sf(xf.size());
  for (std::size_t i = 0; i < xm.size(); ++i) {
    sm[i] = xm[i] + ym[i];
    sf[i] = xf[i] + yf[i];
  }
  Field2D svm(g), svf(g);
  for (std::size_t k = 0; k < svm.values().size(); ++k) {
    svm.values()[k] = xvm.values()[k] + yvm.values()[k];
    svf.values()[k] = xvf.values()[k] + yvf.values()[k];
  }
  const auto mode = PMode::frozen_trace(p);
  const auto a = solve_forward(scheme, xvm, xvf, xm, xf, mode);
  const auto b = solve_forward(scheme, yvm, yvf, ym, yf, mode);
  const auto s = solve_forward(scheme, svm, svf, sm, sf, mode);
  const auto z = solve_forward(scheme, Field2D(), Field2D(), zeros(g), zeros(g), mode);
  for (std::size_t k = 0; k < s.m.values().size(); ++k) {
    EXPECT_NEAR(s.m.values()[k], a.m.values()[k] + b.m.values()[k] - z.m.values()[k], 1e-13);
    EXPECT_NEAR(s.f.values()[k], a.f.values()[k] + b.f.values()[k] - z.f.values()[k], 1e-13);
  }
}

TEST(Forward, ControlsOutsideSupportAreIgnored) {
  const auto model = reference_model();
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  const auto mask = control_support(g, geom).male;
  Field2D v(g);
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 0; i <= g.Na; ++i) v(i, n) = mask[i] == 0.0 ? 5.0 : 0.0;
  const auto sol = solve_forward(model, g, geom, v, Field2D(), zeros(g), zeros(g), PMode::nonlinear());
  for (double x : sol.m.values()) EXPECT_EQ(x, 0.0);
}

TEST(Forward, Errors) {
  const auto model = reference_model();
  const auto geom = reference_geometry();
  const auto g = build_grid(1.0, geom.T, 1.0 / 32);
  EXPECT_THROW(solve_forward(model, g, geom, Field2D(), Field2D(), zeros(g), zeros(g),
                             PMode::frozen_trace(std::vector<double>(3, 0.0))),
               DimensionError);
  EXPECT_THROW(solve_forward(model, g, geom, Field2D(), Field2D(), std::vector<double>(4), zeros(g),
                             PMode::nonlinear()),
               DimensionError);
  auto bad = zeros(g);
  bad[5] = std::nan("");
  try {
    solve_forward(model, g, geom, Field2D(), Field2D(), bad, zeros(g), PMode::nonlinear());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 0);
  }
  auto huge = zeros(g);
  huge[3] = 1.79e308;
  Field2D v(g, 1e308);
  EXPECT_THROW(solve_forward(model, g, geom, v, Field2D(), huge, zeros(g), PMode::nonlinear()), NumericalError);
}

TEST(ComputeM, Oracles) {
  auto model = reference_model();
  const auto g = build_grid(1.0, 1.0, 1.0 / 64);
  std::vector<double> ones(g.age_nodes(), 1.0);
  EXPECT_EQ(compute_M(zeros(g), model, g), 0.0);
  model.lambda = RateFunction::constant(0.0);
  EXPECT_EQ(compute_M(ones, model, g), 0.0);
  model.lambda = RateFunction::expr("a*(1-a)", "a");
  // trapezoid on a - a^2 undershoots 1/6 by exactly h^2/6
  const double got = compute_M(ones, model, g);
  EXPECT_NEAR(got, 1.0 / 6.0, g.h * g.h);
  EXPECT_NEAR(got, 1.0 / 6.0 - g.h * g.h / 6.0, 1e-14);
  EXPECT_THROW(compute_M(std::vector<double>(3), model, g), DimensionError);
}
