#include "popctrl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "popctrl/errors.hpp"
#include "popctrl/fixed_point.hpp"
#include "popctrl/kernels.hpp"
#include "popctrl/observability.hpp"
#include "popctrl/scenario.hpp"

namespace popctrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string scenario;
  std::uint64_t seed = 0;
  std::optional<double> grid_h;
  std::optional<std::string> out;
  bool quiet = false;
};

struct Context {
  Scenario sc;
  CharGrid grid;
  std::optional<Scheme> scheme;
  std::vector<double> m0, f0;
  fs::path out;
  bool quiet = false;
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;

  void say(const std::string& line) const {
    if (!quiet) *log << line << '\n';
  }
};

Context make_context(const CommonOptions& o, std::ostream& log) {
  Context c;
  c.sc = load_scenario(o.scenario);
  c.grid = scenario_grid(c.sc, o.grid_h);
  c.scheme.emplace(c.sc.model, c.grid, c.sc.geometry);
  c.m0 = sample_ages(c.grid, [&](double a) { return c.sc.m0(a); });
  c.f0 = sample_ages(c.grid, [&](double a) { return c.sc.f0(a); });
  c.out = o.out ? fs::path(*o.out) : fs::path(c.sc.output_dir);
  c.quiet = o.quiet || c.sc.quiet;
  c.seed = o.seed;
  c.log = &log;
  fs::create_directories(c.out);
  return c;
}

json grid_json(const CharGrid& g) { return {{"A", g.A}, {"T", g.T}, {"h", g.h}, {"Na", g.Na}, {"Nt", g.Nt}}; }

json geometry_json(const ControlGeometry& g) {
  return {{"a1", g.a1}, {"a2", g.a2}, {"b1", g.b1}, {"b2", g.b2},
          {"T", g.T},   {"rho", g.rho}, {"mode", to_string(g.mode)}};
}

json number_or_inf(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

json quotient_json(const Quotient& q) {
  return {{"value", q.unbounded ? json("inf") : json(q.value)},
          {"numerator", q.numerator},
          {"denominator", q.denominator},
          {"unbounded", q.unbounded}};
}

json validation_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json j = {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    if (c.witness_age) j["witness_age"] = *c.witness_age;
    if (c.witness_p) j["witness_p"] = *c.witness_p;
    checks.push_back(std::move(j));
  }
  json j = {{"checks", checks},
            {"all_passed", r.all_passed()},
            {"admissible_time", r.admissible_time},
            {"time_margin", r.time_margin},
            {"measured_beta_sup", r.measured_beta_sup}};
  if (r.measured_response_lipschitz) j["measured_response_lipschitz"] = *r.measured_response_lipschitz;
  return j;
}

void add_flag(std::vector<std::string>& flags, const std::string& f) {
  if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
}

// Writes report.json (deterministic) and timings.json (wall clock).
int finish(const Context& c, const std::string& command, json scalars, std::vector<std::string> flags,
           std::vector<std::string> files, double seconds, std::optional<int> exit_override = std::nullopt) {
  const int code = exit_override.value_or(flags.empty() ? kExitOk : kExitFlagged);
  files.push_back("report.json");
  files.push_back("timings.json");
  json report = {{"command", command},
                 {"scenario_hash", hex64(c.sc.hash)},
                 {"seed", c.seed},
                 {"grid", grid_json(c.grid)},
                 {"geometry", geometry_json(c.sc.geometry)},
                 {"flags", flags},
                 {"exit_code", code},
                 {"files", files},
                 {"scalars", std::move(scalars)}};
  std::ofstream(c.out / "report.json") << report.dump(2) << '\n';
  json timings = {{"command", command}, {"seconds", seconds}};
  std::ofstream(c.out / "timings.json") << timings.dump(2) << '\n';
  std::string summary = command + ": exit " + std::to_string(code);
  for (const auto& f : flags) summary += " " + f;
  c.say(summary);
  return code;
}

void write_field(const Context& c, const std::string& name, const Field2D& f, std::vector<std::string>& files) {
  write_field_csv((c.out / name).string(), f, c.grid);
  files.push_back(name);
}

// Columns of equal length, first column is time.
void write_columns(const Context& c, const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& cols, std::vector<std::string>& files) {
  std::ofstream os(c.out / name);
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  const std::size_t rows = cols.empty() ? 0 : cols.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << format_double(cols[k][r]);
    os << '\n';
  }
  files.push_back(name);
}

std::vector<double> time_nodes(const CharGrid& g) {
  std::vector<double> t(g.time_nodes());
  for (int n = 0; n <= g.Nt; ++n) t[n] = g.time(n);
  return t;
}

std::vector<double> uncontrolled_trace(const Context& c) {
  return solve_forward(*c.scheme, Field2D(), Field2D(), c.m0, c.f0, PMode::nonlinear()).M_trace;
}

ObservabilityOptions observability_options(const Context& c) {
  ObservabilityOptions o;
  o.mode = adjoint_mode_for(c.sc.geometry.mode);
  o.probes = c.sc.observability.probes;
  o.power_iters = c.sc.observability.power_iters;
  o.unit_probes = c.sc.observability.unit_probes;
  o.seed = c.seed;
  return o;
}

json state_norms(const TerminalNorms& n) { return {{"m", n.m}, {"f", n.f}}; }

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int cmd_validate(const Context& c) {
  const auto t0 = Clock::now();
  const auto rep = validate_hypotheses(c.sc.model, c.sc.geometry, c.sc.validation);
  std::vector<std::string> flags;
  if (!rep.admissible_time) add_flag(flags, kFlagNonAdmissible);
  for (const auto& ch : rep.checks)
    if (!ch.passed) c.say("FAIL " + ch.name + ": " + ch.detail);
  json scalars = validation_json(rep);
  scalars["geometry_check"] = [&] {
    const auto g = geometry_threshold_check(c.sc.geometry, c.sc.model.max_age);
    return json{{"margin_theorem1", g.margin_theorem1},
                {"margin_theorem2_male", g.margin_theorem2_male},
                {"margin_theorem2_female", g.margin_theorem2_female},
                {"lemma1_witness", g.lemma1_witness},
                {"lemma1_a0", g.lemma1_a0},
                {"lemma1_kappa", g.lemma1_kappa},
                {"lemma2_witness", g.lemma2_witness},
                {"lemma2_a0", g.lemma2_a0},
                {"lemma2_kappa", g.lemma2_kappa}};
  }();
  const bool ok = rep.all_passed() && rep.admissible_time;
  return finish(c, "validate", scalars, flags, {}, since(t0), ok ? kExitOk : kExitFlagged);
}

int cmd_simulate(const Context& c) {
  const auto t0 = Clock::now();
  const auto sol = solve_forward(*c.scheme, Field2D(), Field2D(), c.m0, c.f0, PMode::nonlinear());
  std::vector<std::string> files;
  write_field(c, "m.csv", sol.m, files);
  write_field(c, "f.csv", sol.f, files);
  write_columns(c, "traces.csv", {"t", "M", "N"}, {time_nodes(c.grid), sol.M_trace, sol.N_trace}, files);
  const auto norms = terminal_norms(*c.scheme, sol);
  json scalars = {{"terminal_norms", state_norms(norms)},
                  {"initial_norms", {{"m", std::sqrt(age_norm2(c.m0, c.grid))}, {"f", std::sqrt(age_norm2(c.f0, c.grid))}}}};
  return finish(c, "simulate", scalars, {}, files, since(t0));
}

int cmd_adjoint(const Context& c) {
  const auto t0 = Clock::now();
  const auto p = c.sc.adjoint.p ? std::vector<double>(c.grid.time_nodes(), *c.sc.adjoint.p) : uncontrolled_trace(c);
  const auto nT = sample_ages(c.grid, [&](double a) { return c.sc.adjoint.n_T(a); });
  const auto lT = sample_ages(c.grid, [&](double a) { return c.sc.adjoint.l_T(a); });
  const auto mode = adjoint_mode_for(c.sc.geometry.mode);
  const auto adj = solve_adjoint(*c.scheme, nT, lT, p, mode);
  std::vector<std::string> files;
  write_field(c, "n.csv", adj.n, files);
  write_field(c, "l.csv", adj.l, files);
  write_columns(c, "traces.csv", {"t", "n0", "l0", "p"}, {time_nodes(c.grid), adj.n0_trace, adj.l0_trace, p}, files);
  json scalars = {{"observability_ratio", quotient_json(observability_ratio(*c.scheme, nT, lT, p, mode))},
                  {"initial_norms", {{"n", std::sqrt(age_norm2(adj.n.level(0), c.grid))},
                                     {"l", std::sqrt(age_norm2(adj.l.level(0), c.grid))}}}};
  return finish(c, "adjoint", scalars, {}, files, since(t0));
}

json control_scalars(const ControlResult& r) {
  return {{"terminal_norms", {{"m", r.terminal_m_norm}, {"f", r.terminal_f_norm}}},
          {"J", r.J_value},
          {"epsilon", r.epsilon},
          {"theta", r.theta},
          {"cg_iterations", r.iterations}};
}

int cmd_control(const Context& c) {
  const auto t0 = Clock::now();
  const auto p = uncontrolled_trace(c);
  const auto problem = resolved_penalty(c.sc, c.grid, c.m0, c.f0);
  const auto res = synthesize_null_control(*c.scheme, problem, p, c.m0, c.f0);
  std::vector<std::string> files;
  write_field(c, "v_m.csv", res.result.controls.v_m, files);
  write_field(c, "v_f.csv", res.result.controls.v_f, files);
  write_field(c, "m.csv", res.result.state.m, files);
  write_field(c, "f.csv", res.result.state.f, files);
  write_columns(c, "traces.csv", {"t", "M", "N", "p"},
                {time_nodes(c.grid), res.result.state.M_trace, res.result.state.N_trace, p}, files);
  std::vector<std::vector<double>> cols(7);
  for (std::size_t k = 0; k < res.stages.size(); ++k) {
    const auto& s = res.stages[k];
    cols[0].push_back(double(k));
    cols[1].push_back(s.epsilon);
    cols[2].push_back(s.theta);
    cols[3].push_back(s.terminal_m_norm);
    cols[4].push_back(s.terminal_f_norm);
    cols[5].push_back(s.J_value);
    cols[6].push_back(s.iterations);
  }
  write_columns(c, "schedule.csv", {"stage", "epsilon", "theta", "m_norm", "f_norm", "J", "cg_iterations"}, cols,
                files);
  json scalars = control_scalars(res.result);
  scalars["kappa"] = problem.kappa;
  scalars["kappa_f"] = problem.female_tolerance();
  scalars["reached"] = res.reached;
  scalars["uncontrolled_norms"] = state_norms(res.uncontrolled);
  scalars["stages"] = res.stages.size();
  return finish(c, "control", scalars, res.result.flags, files, since(t0));
}

int cmd_solve(const Context& c) {
  const auto t0 = Clock::now();
  const auto problem = resolved_penalty(c.sc, c.grid, c.m0, c.f0);
  const auto res = iterate_to_fixed_point(*c.scheme, problem, c.sc.fixed_point, c.m0, c.f0);
  std::vector<std::string> files;
  write_field(c, "v_m.csv", res.frozen.controls.v_m, files);
  write_field(c, "v_f.csv", res.frozen.controls.v_f, files);
  write_field(c, "m.csv", res.nonlinear.m, files);
  write_field(c, "f.csv", res.nonlinear.f, files);
  write_columns(c, "traces.csv", {"t", "M", "N", "p"},
                {time_nodes(c.grid), res.nonlinear.M_trace, res.nonlinear.N_trace, res.state.p}, files);
  std::vector<std::vector<double>> cols(9);
  for (const auto& it : res.state.history) {
    cols[0].push_back(it.iteration);
    cols[1].push_back(it.delta_l2);
    cols[2].push_back(it.delta_sup);
    cols[3].push_back(it.p_norm);
    cols[4].push_back(it.terminal_m);
    cols[5].push_back(it.terminal_f);
    cols[6].push_back(it.cg_iterations);
    cols[7].push_back(it.y_sup_ratio);
    cols[8].push_back(it.y_dot_ratio);
  }
  write_columns(c, "convergence.csv",
                {"iteration", "delta", "delta_sup", "p_norm", "terminal_m", "terminal_f", "cg_iterations",
                 "y_sup_ratio", "y_dot_ratio"},
                cols, files);

  const auto obs = estimate_constant(*c.scheme, res.state.p, observability_options(c));
  json scalars = {{"nonlinear_terminal_norms", state_norms(res.nonlinear_norms)},
                  {"frozen", control_scalars(res.frozen)},
                  {"kappa", problem.kappa},
                  {"kappa_f", problem.female_tolerance()},
                  {"converged", res.state.converged},
                  {"outer_iterations", res.state.history.size()},
                  {"omega", res.state.omega},
                  {"delta_ratios", res.state.delta_ratios()},
                  {"C_T_estimate", obs.estimated_constant},
                  {"C_T_diverged", obs.diverged}};
  return finish(c, "solve", scalars, res.flags, files, since(t0));
}

int cmd_contraction(const Context& c) {
  const auto t0 = Clock::now();
  ContractionOptions o = c.sc.contraction;
  o.seed = c.seed;
  const auto rep = contraction_test(*c.scheme, c.m0, c.f0, o);
  std::vector<std::string> files;
  std::vector<double> idx(rep.ratios.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = double(k);
  write_columns(c, "ratios.csv", {"pair", "ratio"}, {idx, rep.ratios}, files);
  json scalars = {{"sigma_hat", rep.sigma_hat},   {"lambda_sup", rep.lambda_sup}, {"beta1_sup", rep.beta1_sup},
                  {"beta2_sup", rep.beta2_sup},   {"lipschitz", rep.lipschitz},   {"max_ratio", rep.max_ratio},
                  {"bound", rep.bound},           {"passed", rep.passed},         {"skipped", rep.skipped}};
  return finish(c, "contraction", scalars, {}, files, since(t0), rep.passed ? kExitOk : kExitFlagged);
}

int cmd_observability(const Context& c) {
  const auto t0 = Clock::now();
  const auto& spec = c.sc.observability;
  const auto& base = c.sc.geometry;
  const auto Ts = spec.sweep_T.empty() ? std::vector<double>{base.T} : spec.sweep_T;
  const auto a1s = spec.sweep_a1.empty() ? std::vector<double>{base.a1} : spec.sweep_a1;
  const auto a2s = spec.sweep_a2.empty() ? std::vector<double>{base.a2} : spec.sweep_a2;
  const auto opts = observability_options(c);
  const double h = c.grid.h;

  std::vector<std::string> files;
  std::ofstream csv(c.out / "observability.csv");
  csv << "T,a1,a2,margin,estimate,diverged_flag\n";
  files.push_back("observability.csv");
  int skipped = 0;
  for (double T : Ts)
    for (double a1 : a1s)
      for (double a2 : a2s) {
        ControlGeometry g = base;
        g.T = T;
        g.a1 = a1;
        g.a2 = a2;
        if (!(a1 < a2)) {
          ++skipped;
          continue;
        }
        const CharGrid grid = build_grid(c.sc.model.max_age, T, h);
        const Scheme s(c.sc.model, grid, g);
        const auto m0 = sample_ages(grid, [&](double a) { return c.sc.m0(a); });
        const auto f0 = sample_ages(grid, [&](double a) { return c.sc.f0(a); });
        const auto p = solve_forward(s, Field2D(), Field2D(), m0, f0, PMode::nonlinear()).M_trace;
        const auto rep = estimate_constant(s, p, opts);
        csv << format_double(T) << ',' << format_double(a1) << ',' << format_double(a2) << ','
            << format_double(rep.threshold_margin) << ',' << format_double(rep.estimated_constant) << ','
            << (rep.diverged ? 1 : 0) << '\n';
      }

  // p-spread at the scenario geometry
  const auto M = uncontrolled_trace(c);
  std::vector<std::vector<double>> traces;
  for (double scale : spec.trace_scales) {
    traces.push_back(M);
    for (auto& v : traces.back()) v *= scale;
  }
  const auto spread = estimate_across_traces(*c.scheme, traces, opts);
  const auto rep = estimate_constant(*c.scheme, M, opts);
  json scalars = {{"estimate", rep.estimated_constant},
                  {"power_estimate", rep.power_estimate ? json(*rep.power_estimate) : json(nullptr)},
                  {"unbounded_samples", rep.unbounded_samples},
                  {"diverged", rep.diverged},
                  {"threshold_margin", rep.threshold_margin},
                  {"trace_scales", spec.trace_scales},
                  {"trace_estimates", spread.estimates},
                  {"trace_spread", number_or_inf(spread.spread)},
                  {"sweep_rows_skipped", skipped}};
  return finish(c, "observability", scalars, {}, files, since(t0));
}

int cmd_sweep(const Context& c) {
  const auto t0 = Clock::now();
  const auto p = uncontrolled_trace(c);
  const PenaltyProblem base = resolved_penalty(c.sc, c.grid, c.m0, c.f0);
  const double ratio = base.theta / base.epsilon;
  std::vector<std::string> flags;
  std::vector<std::vector<double>> cols(8);
  std::optional<Controls> warm;
  std::vector<double> m_ratio, f_ratio;
  for (double eps : c.sc.sweep_epsilons) {
    PenaltyProblem pr = base;
    pr.epsilon = eps;
    pr.theta = eps * ratio;
    const auto r = minimize_penalty(*c.scheme, pr, p, c.m0, c.f0, warm ? &*warm : nullptr);
    warm = r.controls;
    for (const auto& f : r.flags) add_flag(flags, f);
    m_ratio.push_back(r.terminal_m_norm * r.terminal_m_norm / r.epsilon);
    f_ratio.push_back(r.terminal_f_norm * r.terminal_f_norm / r.theta);
    cols[0].push_back(r.epsilon);
    cols[1].push_back(r.theta);
    cols[2].push_back(r.terminal_m_norm);
    cols[3].push_back(r.terminal_f_norm);
    cols[4].push_back(m_ratio.back());
    cols[5].push_back(f_ratio.back());
    cols[6].push_back(r.J_value);
    cols[7].push_back(r.iterations);
  }
  std::vector<std::string> files;
  write_columns(c, "sweep.csv",
                {"epsilon", "theta", "m_norm", "f_norm", "m2_over_epsilon", "f2_over_theta", "J", "cg_iterations"},
                cols, files);
  auto spread = [](const std::vector<double>& v) {
    if (v.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  };
  json scalars = {{"m_ratio_spread", number_or_inf(spread(m_ratio))},
                  {"f_ratio_spread", number_or_inf(spread(f_ratio))},
                  {"epsilons", c.sc.sweep_epsilons}};
  return finish(c, "sweep", scalars, flags, files, since(t0));
}

void apply_thread_cap(std::ostream& err) {
  const char* env = std::getenv("POPCTRL_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    err << "ignoring POPCTRL_THREADS='" << env << "' (expected a positive integer)\n";
    return;
  }
  kernels::set_thread_cap(static_cast<int>(n));
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age- and sex-structured population control toolkit", "popctrl"};
  app.require_subcommand(1, 1);
  CommonOptions opts;

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Context&);
  };
  const Entry entries[] = {
      {"validate", "check model hypotheses and the control geometry", cmd_validate},
      {"simulate", "uncontrolled nonlinear forward solve", cmd_simulate},
      {"adjoint", "adjoint solve from the scenario's terminal data", cmd_adjoint},
      {"control", "penalized null control at the uncontrolled trace", cmd_control},
      {"solve", "fixed-point controlled nonlinear pipeline", cmd_solve},
      {"contraction", "weighted-metric contraction probe", cmd_contraction},
      {"observability", "observability constant estimates and geometry sweep", cmd_observability},
      {"sweep", "penalty sweep over epsilon", cmd_sweep},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("scenario", opts.scenario, "scenario JSON file")->required();
    sub->add_option("--seed", opts.seed, "seed for all randomness (default 0)");
    sub->add_option("--grid-h", opts.grid_h, "override grid.h");
    sub->add_option("--out", opts.out, "output directory (default output.dir)");
    sub->add_flag("--quiet", opts.quiet, "suppress the summary line");
    subs.push_back(sub);
  }

  std::vector<const char*> argv{"popctrl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitError;
  }

  apply_thread_cap(err);
  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    try {
      const Context ctx = make_context(opts, out);
      return entries[k].run(ctx);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return kExitError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitError;
    }
  }
  err << app.help();
  return kExitError;
}

}  // namespace popctrl
