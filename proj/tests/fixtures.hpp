#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "popctrl/forward.hpp"
#include "popctrl/grid.hpp"
#include "popctrl/model.hpp"

namespace popctrl::testing {

// Age-dependent mortality, separable fertility starting at b, lambda
// vanishing at both ends.
inline DemographicModel reference_model(double b = 0.15) {
  DemographicModel m;
  m.max_age = 1.0;
  m.mu_m = RateFunction::expr("0.2 + 0.3*a^2", "a");
  m.mu_f = RateFunction::expr("0.15 + 0.25*a", "a");
  SeparableFertility s;
  s.age_profile = RateFunction::expr("2*step(a - " + std::to_string(b) + ")*(1.2 - a)", "a");
  s.response = RateFunction::expr("p/(1+p)", "p");
  s.response_lipschitz = 1.0;
  m.beta = Fertility(s);
  m.lambda = RateFunction::expr("4*a*(1-a)", "a");
  m.gamma = 0.5;
  m.fertility_onset = b;
  return m;
}

inline DemographicModel transport_only_model() {
  DemographicModel m = reference_model();
  SeparableFertility s;
  s.age_profile = RateFunction::constant(0.0);
  s.response = RateFunction::expr("p/(1+p)", "p");
  m.beta = Fertility(s);
  return m;
}

inline ControlGeometry reference_geometry(double T = 0.35) {
  ControlGeometry g;
  g.a1 = 0.2;
  g.a2 = 0.9;
  g.b1 = 0.1;
  g.b2 = 0.95;
  g.T = T;
  return g;
}

inline std::vector<double> random_nodes(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Field2D random_field(std::mt19937_64& rng, const CharGrid& g, double lo, double hi) {
  Field2D f(g);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : f.values()) x = d(rng);
  return f;
}

}  // namespace popctrl::testing
