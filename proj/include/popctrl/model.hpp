#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "popctrl/expression.hpp"

namespace popctrl {

/// Scalar function of one variable: a constant, a table sampled at strictly
/// increasing abscissae (linear interpolation, constant extrapolation), or a
/// closed-form expression.
class RateFunction {
 public:
  enum class Kind { Constant, Table, Expr };

  RateFunction() = default;  // constant 0

  static RateFunction constant(double value);
  static RateFunction table(std::vector<double> x, std::vector<double> y);
  static RateFunction expr(const std::string& source, const std::string& variable);

  double operator()(double x) const;

  Kind kind() const noexcept { return kind_; }
  std::string describe() const;

 private:
  Kind kind_ = Kind::Constant;
  double value_ = 0.0;
  std::vector<double> x_, y_;
  std::optional<Expression> expr_;
};

/// beta(a, p) = age_profile(a) * response(p), with |response(p) - response(q)|
/// bounded by response_lipschitz * |p - q|.
struct SeparableFertility {
  RateFunction age_profile;
  RateFunction response;
  double response_lipschitz = 1.0;
};

/// Fertility rate beta(a, p): either separable or a general expression in
/// (a, p).
class Fertility {
 public:
  Fertility() = default;
  explicit Fertility(SeparableFertility s) : form_(std::move(s)) {}
  explicit Fertility(Expression general) : form_(std::move(general)) {}

  double operator()(double a, double p) const;

  bool separable() const noexcept { return std::holds_alternative<SeparableFertility>(form_); }
  const SeparableFertility& separable_form() const;
  std::string describe() const;

 private:
  std::variant<SeparableFertility, Expression> form_{SeparableFertility{}};
};

/// Demographic data of the two-sex age-structured system.
struct DemographicModel {
  double max_age = 1.0;  // A
  RateFunction mu_m;
  RateFunction mu_f;
  Fertility beta;
  RateFunction lambda;
  double gamma = 0.5;            // female fraction of newborns
  double fertility_onset = 0.1;  // b
  /// When set, beta is forced to zero below the onset age b.
  bool apply_onset_cutoff = true;
  /// Survival ratio of the oldest age cell; 0 reproduces pi(A) = 0.
  double last_cell_survival = 0.0;
  /// Panel width of the composite trapezoid used for survival ratios.
  double quadrature_step = 1.0 / 4096.0;
  /// Optional declared bound ||beta||_inf.
  std::optional<double> beta_bound;
};

enum class ControlMode { Both, MaleOnly, FemaleOnly };

std::string to_string(ControlMode mode);
ControlMode control_mode_from_string(const std::string& s);

/// Control windows Xi = (a1,a2) x (0,T), Xi' = (b1,b2) x (0,T), Theta =
/// (0,a2) x (0,T) and the terminal tail cutoff rho.
struct ControlGeometry {
  double a1 = 0.0, a2 = 1.0;
  double b1 = 0.0, b2 = 1.0;
  double T = 1.0;
  double rho = 0.0;
  ControlMode mode = ControlMode::Both;
};

/// Strictly positive time margin required by the controllability results
/// for the geometry's mode: T - (a1 + A - a2) for BOTH / FEMALE_ONLY and
/// T - (A - a2) for MALE_ONLY.
double time_margin(const ControlGeometry& geom, double max_age);
bool admissible_time(const ControlGeometry& geom, double max_age);

/// beta(a, p) including the onset cutoff. Throws DomainError for a outside [0, A].
double beta_eval(const DemographicModel& model, double a, double p);
double lambda_eval(const DemographicModel& model, double a);

/// exp(-int_{a_lo}^{a_hi} mu) by composite trapezoid with panels no wider
/// than `step`. Throws DomainError when a_lo > a_hi.
double survival_ratio(const RateFunction& mu, double a_lo, double a_hi, double step);
double survival_ratio(const DemographicModel& model, const RateFunction& mu, double a_lo,
                      double a_hi);

struct HypothesisCheck {
  std::string name;
  bool passed = true;
  std::string detail;
  std::optional<double> witness_age;
  std::optional<double> witness_p;
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;
  bool admissible_time = false;
  double time_margin = 0.0;
  double measured_beta_sup = 0.0;
  std::optional<double> measured_response_lipschitz;

  bool all_passed() const;
  const HypothesisCheck* find(const std::string& name) const;
};

struct ValidationOptions {
  int age_samples = 257;
  int p_samples = 65;
  double p_max = 10.0;
  /// Check lambda(0) = lambda(A) = 0 (required by the fixed-point driver).
  bool require_lambda_endpoints = true;
};

/// Checks the demographic hypotheses on sampled points and the geometry
/// constraints for the selected mode. Rate functions that evaluate to a
/// non-finite value raise ConfigError naming the field.
ValidationReport validate_hypotheses(const DemographicModel& model, const ControlGeometry& geom,
                                     const ValidationOptions& opts = {});

/// Largest sampled |response(p) - response(q)| / |p - q| over [0, p_max].
double estimate_response_lipschitz(const SeparableFertility& fert, double p_max, int samples);

}  // namespace popctrl
