#include "popctrl/scenario.hpp"

#include <cmath>
#include <fstream>
#include <algorithm>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "popctrl/errors.hpp"

namespace popctrl {

using nlohmann::json;

namespace {

const char* type_name(const json& j) { return j.type_name(); }

// Object reader. Keys outside the allowed list are rejected up front, so a
// misspelled key is reported as unknown rather than as a missing one.
class Obj {
 public:
  Obj(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object, got " + type_name(j_));
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
        throw ConfigError(at(it.key()) + ": unknown key");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  const json* get(const std::string& key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = get(key);
    if (!v) throw ConfigError(at(key) + ": missing required key");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    return v ? as_number(*v, at(key)) : fallback;
  }
  double number(const std::string& key) { return as_number(require(key), at(key)); }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = get(key);
    if (!v || v->is_null()) return std::nullopt;
    return as_number(*v, at(key));
  }

  int integer(const std::string& key, int fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer, got " + type_name(*v));
    return v->get<int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(key) + ": expected a boolean, got " + type_name(*v));
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    return as_string(*v, at(key));
  }
  std::string string(const std::string& key) { return as_string(require(key), at(key)); }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    return as_numbers(*v, at(key));
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number, got " + type_name(v));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path + ": must be finite");
    return d;
  }
  static std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string, got " + type_name(v));
    return v.get<std::string>();
  }
  static std::vector<double> as_numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array, got " + type_name(v));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

std::string kind_of(const json& j, const std::string& path, const char* fallback) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object, got " + type_name(j));
  auto it = j.find("kind");
  if (it == j.end()) {
    if (fallback) return fallback;
    throw ConfigError(path + ".kind: missing required key");
  }
  return Obj::as_string(*it, path + ".kind");
}

// Rate function: a bare number, or {"kind": "constant"|"table"|"expr", ...}.
RateFunction parse_rate(const json& j, const std::string& path, const std::string& variable) {
  if (j.is_number()) return RateFunction::constant(Obj::as_number(j, path));
  const std::string kind = kind_of(j, path, nullptr);
  try {
    if (kind == "constant") {
      Obj o(j, path, {"kind", "value"});
      return RateFunction::constant(o.number("value"));
    }
    if (kind == "table") {
      Obj o(j, path, {"kind", "x", "y"});
      auto x = Obj::as_numbers(o.require("x"), o.at("x"));
      auto y = Obj::as_numbers(o.require("y"), o.at("y"));
      return RateFunction::table(std::move(x), std::move(y));
    }
    if (kind == "expr") {
      Obj o(j, path, {"kind", "expr"});
      return RateFunction::expr(o.string("expr"), variable);
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("$", 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
  throw ConfigError(path + ".kind: unknown rate kind '" + kind + "' (expected constant, table or expr)");
}

Fertility parse_fertility(const json& j, const std::string& path) {
  const std::string kind = kind_of(j, path, "separable");
  if (kind == "separable") {
    Obj o(j, path, {"kind", "age_profile", "response", "response_lipschitz"});
    SeparableFertility s;
    s.age_profile = parse_rate(o.require("age_profile"), o.at("age_profile"), "a");
    s.response = parse_rate(o.require("response"), o.at("response"), "p");
    s.response_lipschitz = o.number("response_lipschitz", 1.0);
    return Fertility(std::move(s));
  }
  if (kind == "expr") {
    Obj o(j, path, {"kind", "expr"});
    const std::string src = o.string("expr");
    try {
      return Fertility(Expression(src, {"a", "p"}));
    } catch (const ConfigError& e) {
      throw ConfigError(o.at("expr") + ": " + e.what());
    }
  }
  throw ConfigError(path + ".kind: unknown fertility kind '" + kind + "' (expected separable or expr)");
}

DemographicModel parse_model(const json& j) {
  Obj o(j, "$.model", {"max_age", "mu_m", "mu_f", "beta", "lambda", "gamma", "fertility_onset",
                        "apply_onset_cutoff", "last_cell_survival", "quadrature_step", "beta_bound"});
  DemographicModel m;
  m.max_age = o.number("max_age", 1.0);
  m.mu_m = parse_rate(o.require("mu_m"), o.at("mu_m"), "a");
  m.mu_f = parse_rate(o.require("mu_f"), o.at("mu_f"), "a");
  m.beta = parse_fertility(o.require("beta"), o.at("beta"));
  m.lambda = parse_rate(o.require("lambda"), o.at("lambda"), "a");
  m.gamma = o.number("gamma", m.gamma);
  m.fertility_onset = o.number("fertility_onset", m.fertility_onset);
  m.apply_onset_cutoff = o.boolean("apply_onset_cutoff", m.apply_onset_cutoff);
  m.last_cell_survival = o.number("last_cell_survival", m.last_cell_survival);
  m.quadrature_step = o.number("quadrature_step", m.quadrature_step);
  m.beta_bound = o.optional_number("beta_bound");
  return m;
}

ControlGeometry parse_geometry(const json& j) {
  Obj o(j, "$.geometry", {"a1", "a2", "b1", "b2", "T", "rho", "mode"});
  ControlGeometry g;
  g.a1 = o.number("a1");
  g.a2 = o.number("a2");
  g.b1 = o.number("b1", g.a1);
  g.b2 = o.number("b2", g.a2);
  g.T = o.number("T");
  g.rho = o.number("rho", 0.0);
  const std::string mode = o.string("mode", "BOTH");
  try {
    g.mode = control_mode_from_string(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(o.at("mode") + ": " + e.what());
  }
  return g;
}

void parse_penalty(const json& j, Scenario& s) {
  Obj o(j, "$.penalty", {"epsilon", "theta", "kappa", "kappa_relative", "kappa_f", "max_cg_iters", "cg_tol", "schedule"});
  PenaltyProblem& p = s.penalty;
  p.epsilon = o.number("epsilon", p.epsilon);
  p.theta = o.number("theta", p.theta);
  const json* kappa = o.get("kappa");
  const json* rel = o.get("kappa_relative");
  if (kappa && rel) throw ConfigError("$.penalty: give either kappa or kappa_relative, not both");
  if (kappa) p.kappa = Obj::as_number(*kappa, o.at("kappa"));
  if (rel) s.kappa_relative = Obj::as_number(*rel, o.at("kappa_relative"));
  p.kappa_f = o.optional_number("kappa_f");
  p.max_cg_iters = o.integer("max_cg_iters", p.max_cg_iters);
  p.cg_tol = o.number("cg_tol", p.cg_tol);
  if (const json* sched = o.get("schedule")) {
    Obj so(*sched, o.at("schedule"), {"eps0", "ratio", "stages"});
    p.schedule_eps0 = so.number("eps0", p.schedule_eps0);
    p.schedule_ratio = so.number("ratio", p.schedule_ratio);
    p.schedule_stages = so.integer("stages", p.schedule_stages);
  }
}

void parse_fixed_point(const json& j, FixedPointOptions& fp) {
  Obj o(j, "$.fixed_point", {"omega", "fp_tol", "max_outer_iters"});
  fp.omega = o.number("omega", fp.omega);
  fp.fp_tol = o.number("fp_tol", fp.fp_tol);
  fp.max_outer_iters = o.integer("max_outer_iters", fp.max_outer_iters);
}

void parse_adjoint(const json& j, AdjointSpec& a) {
  Obj o(j, "$.adjoint", {"n_T", "l_T", "p"});
  if (const json* v = o.get("n_T")) a.n_T = parse_rate(*v, o.at("n_T"), "a");
  if (const json* v = o.get("l_T")) a.l_T = parse_rate(*v, o.at("l_T"), "a");
  a.p = o.optional_number("p");
}

void parse_observability(const json& j, ObservabilitySpec& ob) {
  Obj o(j, "$.observability", {"probes", "power_iters", "unit_probes", "trace_scales", "sweep"});
  ob.probes = o.integer("probes", ob.probes);
  ob.power_iters = o.integer("power_iters", ob.power_iters);
  ob.unit_probes = o.boolean("unit_probes", ob.unit_probes);
  ob.trace_scales = o.numbers("trace_scales", ob.trace_scales);
  if (const json* sw = o.get("sweep")) {
    Obj so(*sw, o.at("sweep"), {"T", "a1", "a2"});
    ob.sweep_T = so.numbers("T", {});
    ob.sweep_a1 = so.numbers("a1", {});
    ob.sweep_a2 = so.numbers("a2", {});
  }
}

void parse_contraction(const json& j, ContractionOptions& c) {
  Obj o(j, "$.contraction", {"trials", "field_scale", "p_max", "tolerance"});
  c.trials = o.integer("trials", c.trials);
  c.field_scale = o.number("field_scale", c.field_scale);
  c.p_max = o.number("p_max", c.p_max);
  c.tolerance = o.number("tolerance", c.tolerance);
}

void parse_validation(const json& j, ValidationOptions& v) {
  Obj o(j, "$.validation", {"age_samples", "p_samples", "p_max", "require_lambda_endpoints"});
  v.age_samples = o.integer("age_samples", v.age_samples);
  v.p_samples = o.integer("p_samples", v.p_samples);
  v.p_max = o.number("p_max", v.p_max);
  v.require_lambda_endpoints = o.boolean("require_lambda_endpoints", v.require_lambda_endpoints);
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

Scenario parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
  Obj o(root, "$", {"model", "geometry", "grid", "initial", "penalty", "fixed_point", "adjoint", "observability",
                   "contraction", "validation", "sweep", "output"});
  Scenario s;
  s.model = parse_model(o.require("model"));
  s.geometry = parse_geometry(o.require("geometry"));
  {
    Obj go(o.require("grid"), "$.grid", {"h"});
    s.grid_h = go.number("h");
  }
  if (const json* init = o.get("initial")) {
    Obj io(*init, "$.initial", {"m0", "f0"});
    if (const json* v = io.get("m0")) s.m0 = parse_rate(*v, io.at("m0"), "a");
    if (const json* v = io.get("f0")) s.f0 = parse_rate(*v, io.at("f0"), "a");
  }
  if (const json* v = o.get("penalty")) parse_penalty(*v, s);
  s.penalty.mode = s.geometry.mode;
  if (const json* v = o.get("fixed_point")) parse_fixed_point(*v, s.fixed_point);
  if (const json* v = o.get("adjoint")) parse_adjoint(*v, s.adjoint);
  if (const json* v = o.get("observability")) parse_observability(*v, s.observability);
  if (const json* v = o.get("contraction")) parse_contraction(*v, s.contraction);
  if (const json* v = o.get("validation")) parse_validation(*v, s.validation);
  if (const json* v = o.get("sweep")) {
    Obj so(*v, "$.sweep", {"epsilon"});
    s.sweep_epsilons = so.numbers("epsilon", s.sweep_epsilons);
  }
  if (const json* v = o.get("output")) {
    Obj oo(*v, "$.output", {"dir", "verbosity"});
    s.output_dir = oo.string("dir", s.output_dir);
    const std::string verbosity = oo.string("verbosity", "normal");
    if (verbosity != "normal" && verbosity != "quiet")
      throw ConfigError(oo.at("verbosity") + ": expected \"normal\" or \"quiet\"");
    s.quiet = verbosity == "quiet";
  }

  s.canonical_json = root.dump();
  s.hash = fnv1a(s.canonical_json);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

CharGrid scenario_grid(const Scenario& s, std::optional<double> h_override) {
  return build_grid(s.model.max_age, s.geometry.T, h_override.value_or(s.grid_h));
}

PenaltyProblem resolved_penalty(const Scenario& s, const CharGrid& grid, std::span<const double> m0,
                                std::span<const double> f0) {
  PenaltyProblem p = s.penalty;
  p.mode = s.geometry.mode;
  if (s.kappa_relative)
    p.kappa = *s.kappa_relative * (std::sqrt(age_norm2(m0, grid)) + std::sqrt(age_norm2(f0, grid)));
  return p;
}

}  // namespace popctrl
