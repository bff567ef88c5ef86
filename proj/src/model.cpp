#include "popctrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "popctrl/errors.hpp"

namespace popctrl {

RateFunction RateFunction::constant(double value) {
  RateFunction f;
  f.kind_ = Kind::Constant;
  f.value_ = value;
  f.expr_.reset();
  return f;
}

RateFunction RateFunction::table(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || x.size() != y.size())
    throw ConfigError("table needs matching, non-empty x and y arrays");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw ConfigError("table abscissae must be strictly increasing");
  RateFunction f;
  f.kind_ = Kind::Table;
  f.x_ = std::move(x);
  f.y_ = std::move(y);
  f.expr_.reset();
  return f;
}

RateFunction RateFunction::expr(const std::string& source, const std::string& variable) {
  RateFunction f;
  f.kind_ = Kind::Expr;
  f.expr_.emplace(source, std::vector<std::string>{variable});
  return f;
}

double RateFunction::operator()(double x) const {
  switch (kind_) {
    case Kind::Constant:
      return value_;
    case Kind::Table: {
      if (x <= x_.front()) return y_.front();
      if (x >= x_.back()) return y_.back();
      const auto it = std::upper_bound(x_.begin(), x_.end(), x);
      const std::size_t k = static_cast<std::size_t>(it - x_.begin());
      const double t = (x - x_[k - 1]) / (x_[k] - x_[k - 1]);
      return (1.0 - t) * y_[k - 1] + t * y_[k];
    }
    case Kind::Expr:
      return (*expr_)(x);
  }
  return 0.0;
}

std::string RateFunction::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Constant:
      os << "constant(" << value_ << ")";
      break;
    case Kind::Table:
      os << "table(" << x_.size() << " points)";
      break;
    case Kind::Expr:
      os << "expr(" << expr_->source() << ")";
      break;
  }
  return os.str();
}

double Fertility::operator()(double a, double p) const {
  if (const auto* s = std::get_if<SeparableFertility>(&form_)) return s->age_profile(a) * s->response(p);
  return std::get<Expression>(form_)(a, p);
}

const SeparableFertility& Fertility::separable_form() const {
  if (const auto* s = std::get_if<SeparableFertility>(&form_)) return *s;
  throw ConfigError("fertility is not in separable form beta1(a)*beta2(p)");
}

std::string Fertility::describe() const {
  if (const auto* s = std::get_if<SeparableFertility>(&form_))
    return "separable(" + s->age_profile.describe() + " * " + s->response.describe() + ")";
  return "expr(" + std::get<Expression>(form_).source() + ")";
}

std::string to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::Both:
      return "BOTH";
    case ControlMode::MaleOnly:
      return "MALE_ONLY";
    case ControlMode::FemaleOnly:
      return "FEMALE_ONLY";
  }
  return "BOTH";
}

ControlMode control_mode_from_string(const std::string& s) {
  if (s == "BOTH") return ControlMode::Both;
  if (s == "MALE_ONLY") return ControlMode::MaleOnly;
  if (s == "FEMALE_ONLY") return ControlMode::FemaleOnly;
  throw ConfigError("unknown control mode '" + s + "' (expected BOTH, MALE_ONLY or FEMALE_ONLY)");
}

double time_margin(const ControlGeometry& geom, double max_age) {
  if (geom.mode == ControlMode::MaleOnly) return geom.T - (max_age - geom.a2);
  return geom.T - (geom.a1 + max_age - geom.a2);
}

bool admissible_time(const ControlGeometry& geom, double max_age) {
  // margins within rounding of zero count as equality
  return time_margin(geom, max_age) > 1e-12 * std::max(1.0, geom.T);
}

namespace {

void check_age(const DemographicModel& model, double a) {
  if (!(a >= 0.0 && a <= model.max_age))
    throw DomainError("age " + std::to_string(a) + " outside [0, " + std::to_string(model.max_age) +
                      "]");
}

}  // namespace

double beta_eval(const DemographicModel& model, double a, double p) {
  check_age(model, a);
  if (model.apply_onset_cutoff && a < model.fertility_onset) return 0.0;
  return model.beta(a, p);
}

double lambda_eval(const DemographicModel& model, double a) {
  check_age(model, a);
  return model.lambda(a);
}

double survival_ratio(const RateFunction& mu, double a_lo, double a_hi, double step) {
  if (a_lo > a_hi)
    throw DomainError("survival ratio needs a_lo <= a_hi, got (" + std::to_string(a_lo) + ", " +
                      std::to_string(a_hi) + ")");
  if (a_lo == a_hi) return 1.0;
  const int panels = std::max(1, static_cast<int>(std::ceil((a_hi - a_lo) / step - 1e-9)));
  const double dx = (a_hi - a_lo) / panels;
  double sum = 0.5 * (mu(a_lo) + mu(a_hi));
  for (int k = 1; k < panels; ++k) sum += mu(a_lo + k * dx);
  return std::exp(-sum * dx);
}

double survival_ratio(const DemographicModel& model, const RateFunction& mu, double a_lo,
                      double a_hi) {
  check_age(model, a_lo);
  check_age(model, a_hi);
  return survival_ratio(mu, a_lo, a_hi, model.quadrature_step);
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const HypothesisCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

double estimate_response_lipschitz(const SeparableFertility& fert, double p_max, int samples) {
  double best = 0.0;
  const double dp = p_max / (samples - 1);
  double prev = fert.response(0.0);
  for (int k = 1; k < samples; ++k) {
    const double cur = fert.response(k * dp);
    best = std::max(best, std::abs(cur - prev) / dp);
    prev = cur;
  }
  return best;
}

namespace {

double checked(double value, const char* field, double a) {
  if (!std::isfinite(value))
    throw ConfigError(std::string("model field '") + field + "' is not evaluable at a=" +
                      std::to_string(a));
  return value;
}

HypothesisCheck named(const char* name) {
  HypothesisCheck c;
  c.name = name;
  return c;
}

HypothesisCheck fail_at(HypothesisCheck c, const std::string& detail, double a,
                        std::optional<double> p = std::nullopt) {
  c.passed = false;
  c.detail = detail;
  c.witness_age = a;
  c.witness_p = p;
  return c;
}

}  // namespace

ValidationReport validate_hypotheses(const DemographicModel& model, const ControlGeometry& geom,
                                     const ValidationOptions& opts) {
  ValidationReport report;
  const double A = model.max_age;
  if (!(A > 0.0)) throw ConfigError("model.max_age must be positive");

  std::vector<double> ages(opts.age_samples);
  for (int i = 0; i < opts.age_samples; ++i) ages[i] = A * i / (opts.age_samples - 1);
  std::vector<double> ps(opts.p_samples);
  for (int k = 0; k < opts.p_samples; ++k) ps[k] = opts.p_max * k / (opts.p_samples - 1);

  // (H1) nonnegative mortality
  {
    HypothesisCheck c = named("H1_mortality_nonnegative");
    for (double a : ages) {
      const double m = checked(model.mu_m(a), "mu_m", a);
      const double f = checked(model.mu_f(a), "mu_f", a);
      if (m < 0.0 || f < 0.0) {
        c = fail_at(c, m < 0.0 ? "mu_m < 0" : "mu_f < 0", a);
        break;
      }
    }
    report.checks.push_back(c);
  }

  // (H2) beta >= 0, and the (H3) sup bound / vanishing at p = 0 / onset cutoff
  {
    HypothesisCheck nonneg = named("H2_beta_nonnegative");
    HypothesisCheck cutoff = named("H3_beta_onset_cutoff");
    HypothesisCheck zero_p = named("H3_beta_vanishes_at_zero_p");
    HypothesisCheck bound = named("H3_beta_bounded");
    double sup = 0.0;
    for (double a : ages) {
      for (double p : ps) {
        const double v = checked(beta_eval(model, a, p), "beta", a);
        sup = std::max(sup, v);
        if (nonneg.passed && v < 0.0) nonneg = fail_at(nonneg, "beta < 0", a, p);
        if (cutoff.passed && a < model.fertility_onset && v != 0.0)
          cutoff = fail_at(cutoff, "beta != 0 below onset age b", a, p);
        if (bound.passed && model.beta_bound && v > *model.beta_bound)
          bound = fail_at(bound, "beta exceeds declared bound", a, p);
      }
      const double v0 = beta_eval(model, a, 0.0);
      if (zero_p.passed && v0 != 0.0) {
        std::ostringstream os;
        os << "beta(a,0) = " << v0;
        zero_p = fail_at(zero_p, os.str(), a, 0.0);
      }
    }
    report.measured_beta_sup = sup;
    if (bound.passed) {
      std::ostringstream os;
      os << "sampled sup = " << sup;
      bound.detail = os.str();
    }
    report.checks.push_back(nonneg);
    report.checks.push_back(cutoff);
    report.checks.push_back(zero_p);
    report.checks.push_back(bound);
  }

  // (H4) lambda >= 0 and lambda*mu_m integrable (finite quadrature only)
  {
    HypothesisCheck c = named("H4_lambda_nonnegative");
    for (double a : ages) {
      const double l = checked(model.lambda(a), "lambda", a);
      if (l < 0.0) {
        c = fail_at(c, "lambda < 0", a);
        break;
      }
    }
    report.checks.push_back(c);

    HypothesisCheck integrable = named("H4_lambda_mu_m_integrable");
    double sum = 0.0;
    for (std::size_t i = 1; i < ages.size(); ++i)
      sum += 0.5 * (ages[i] - ages[i - 1]) *
             (model.lambda(ages[i - 1]) * model.mu_m(ages[i - 1]) +
              model.lambda(ages[i]) * model.mu_m(ages[i]));
    if (!std::isfinite(sum)) integrable = fail_at(integrable, "quadrature of lambda*mu_m is not finite", A);
    report.checks.push_back(integrable);
  }

  if (opts.require_lambda_endpoints) {
    HypothesisCheck c = named("lambda_vanishes_at_endpoints");
    if (model.lambda(0.0) != 0.0)
      c = fail_at(c, "lambda(0) != 0", 0.0);
    else if (model.lambda(A) != 0.0)
      c = fail_at(c, "lambda(A) != 0", A);
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c = named("gamma_in_unit_interval");
    if (!(model.gamma > 0.0 && model.gamma < 1.0)) {
      c.passed = false;
      c.detail = "gamma must lie in (0,1)";
    }
    report.checks.push_back(c);
  }
  {
    HypothesisCheck c = named("onset_age_in_range");
    if (!(model.fertility_onset > 0.0 && model.fertility_onset < A)) {
      c.passed = false;
      c.detail = "b must lie in (0,A)";
    }
    report.checks.push_back(c);
  }

  // (H5) Lipschitz probe of the response function
  if (model.beta.separable()) {
    const auto& s = model.beta.separable_form();
    HypothesisCheck c = named("H5_response_lipschitz");
    const double est = estimate_response_lipschitz(s, opts.p_max, 64 * (opts.p_samples - 1) + 1);
    report.measured_response_lipschitz = est;
    std::ostringstream os;
    os << "estimated " << est << ", configured " << s.response_lipschitz;
    c.detail = os.str();
    if (std::abs(est - s.response_lipschitz) > 0.1 * s.response_lipschitz) c.passed = false;
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c = named("geometry_windows");
    std::ostringstream os;
    if (!(geom.a1 >= 0.0 && geom.a1 < geom.a2 && geom.a2 <= A))
      os << "need 0 <= a1 < a2 <= A; ";
    if (!(geom.b1 >= 0.0 && geom.b1 < geom.b2 && geom.b2 <= A))
      os << "need 0 <= b1 < b2 <= A; ";
    if (!(geom.T > 0.0)) os << "need T > 0; ";
    if (geom.rho < 0.0) os << "need rho >= 0; ";
    if (geom.mode == ControlMode::Both) {
      if (!(geom.b1 <= geom.a1 && geom.a2 <= geom.b2)) os << "need (a1,a2) inside (b1,b2); ";
    }
    c.detail = os.str();
    c.passed = c.detail.empty();
    report.checks.push_back(c);
  }
  if (geom.mode == ControlMode::Both) {
    HypothesisCheck c = named("onset_after_male_window_start");
    if (!(geom.a1 < model.fertility_onset)) {
      std::ostringstream os;
      os << "a1 = " << geom.a1 << " is not below b = " << model.fertility_onset;
      c = fail_at(c, os.str(), geom.a1);
    }
    report.checks.push_back(c);
  }

  report.time_margin = time_margin(geom, A);
  report.admissible_time = admissible_time(geom, A);
  return report;
}

}  // namespace popctrl
