#include "popctrl/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "popctrl/errors.hpp"

namespace popctrl {

Quotient Quotient::from(double num, double den) {
  Quotient q;
  q.numerator = num;
  q.denominator = den;
  if (den > 0.0)
    q.value = num / den;
  else if (num > 0.0)
    q.unbounded = true;
  return q;  // 0/0 stays 0
}

double Quotient::as_double() const { return unbounded ? std::numeric_limits<double>::infinity() : value; }

namespace {

struct Forms {
  double num = 0.0, den = 0.0;
};

Forms quotient_forms(const Scheme& scheme, const AdjointSolution& adj) {
  const CharGrid& g = scheme.grid();
  const auto& w = scheme.age_weights();
  const auto& wt = scheme.time_weights();
  const auto& mm = scheme.support().male;
  const auto& mf = scheme.support().female;
  Forms f;
  for (int i = 0; i <= g.Na; ++i) f.num += w[i] * (adj.n(i, 0) * adj.n(i, 0) + adj.l(i, 0) * adj.l(i, 0));
  for (int n = 0; n <= g.Nt; ++n)
    for (int i = 1; i <= g.Na; ++i) {
      const double a = adj.n(i, n), b = adj.l(i, n);
      f.den += wt[n] * w[i] * (mm[i] * a * a + mf[i] * b * b);
    }
  return f;
}

// Zero the components the adjoint mode discards, so iterates live in the
// subspace the quotient actually sees.
void project(const Scheme& scheme, AdjointMode mode, std::vector<double>& n_T, std::vector<double>& l_T) {
  const CharGrid& g = scheme.grid();
  if (mode == AdjointMode::FemaleOnly) std::fill(n_T.begin(), n_T.end(), 0.0);
  if (mode == AdjointMode::MaleOnly) {
    std::fill(l_T.begin(), l_T.end(), 0.0);
    const double rho = scheme.geometry().rho;
    for (int i = 0; i <= g.Na; ++i)
      if (g.age(i) < rho - 1e-9 * g.h) n_T[i] = 0.0;
  }
}

bool all_zero(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
}

// Stacked terminal datum x = (n_T, l_T) and the two quadratic forms
// num(x) = <x, B x>_h and den(x) = <x, C x>_h, applied through one adjoint
// and one forward solve each.
class Pencil {
 public:
  Pencil(const Scheme& scheme, std::span<const double> p, AdjointMode mode)
      : s_(scheme), p_(p.begin(), p.end()), mode_(mode), na_(scheme.grid().age_nodes()) {}

  std::size_t size() const { return 2 * na_; }

  void split(std::span<const double> x, std::vector<double>& n, std::vector<double>& l) const {
    n.assign(x.begin(), x.begin() + na_);
    l.assign(x.begin() + na_, x.end());
  }

  void project_stacked(std::vector<double>& x) const {
    std::vector<double> n, l;
    split(x, n, l);
    project(s_, mode_, n, l);
    std::copy(n.begin(), n.end(), x.begin());
    std::copy(l.begin(), l.end(), x.begin() + na_);
  }

  // B x: forward from initial data (w/h) * adjoint(0).
  std::vector<double> apply_B(std::span<const double> x) const {
    std::vector<double> n, l;
    split(x, n, l);
    const auto adj = solve_adjoint(s_, n, l, p_, mode_);
    const CharGrid& g = s_.grid();
    const auto& w = s_.age_weights();
    std::vector<double> m0(na_), f0(na_);
    for (std::size_t i = 0; i < na_; ++i) {
      m0[i] = w[i] / g.h * adj.n(int(i), 0);
      f0[i] = w[i] / g.h * adj.l(int(i), 0);
    }
    return terminal(solve_forward(s_, Field2D(), Field2D(), m0, f0, PMode::frozen_trace(p_)));
  }

  // C x: forward with controls equal to the adjoint fields.
  std::vector<double> apply_C(std::span<const double> x) const {
    std::vector<double> n, l;
    split(x, n, l);
    const auto adj = solve_adjoint(s_, n, l, p_, mode_);
    const std::vector<double> zero(na_, 0.0);
    return terminal(solve_forward(s_, adj.n, adj.l, zero, zero, PMode::frozen_trace(p_)));
  }

 private:
  std::vector<double> terminal(const StateSolution& sol) const {
    const int Nt = s_.grid().Nt;
    std::vector<double> out(2 * na_);
    auto m = sol.m.level(Nt);
    auto f = sol.f.level(Nt);
    std::copy(m.begin(), m.end(), out.begin());
    std::copy(f.begin(), f.end(), out.begin() + na_);
    project_stacked(out);
    return out;
  }

  const Scheme& s_;
  std::vector<double> p_;
  AdjointMode mode_;
  std::size_t na_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// CG on (C + delta I) z = y.
std::vector<double> solve_shifted(const Pencil& P, double delta, std::span<const double> y, int max_iters,
                                  double tol) {
  std::vector<double> z(y.size(), 0.0), r(y.begin(), y.end()), d = r;
  double rr = dot(r, r);
  const double stop = tol * tol * rr;
  for (int it = 0; it < max_iters && rr > stop && rr > 0.0; ++it) {
    auto Cd = P.apply_C(d);
    for (std::size_t i = 0; i < d.size(); ++i) Cd[i] += delta * d[i];
    const double dCd = dot(d, Cd);
    if (!(dCd > 0.0)) break;
    const double alpha = rr / dCd;
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += alpha * d[i];
      r[i] -= alpha * Cd[i];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = r[i] + beta * d[i];
  }
  return z;
}

Quotient stacked_ratio(const Scheme& scheme, std::span<const double> x, std::span<const double> p,
                       AdjointMode mode) {
  const std::size_t na = x.size() / 2;
  return observability_ratio(scheme, x.subspan(0, na), x.subspan(na), p, mode);
}

}  // namespace

Quotient observability_ratio(const Scheme& scheme, std::span<const double> n_T, std::span<const double> l_T,
                             std::span<const double> p, AdjointMode mode) {
  std::vector<double> n(n_T.begin(), n_T.end()), l(l_T.begin(), l_T.end());
  if (static_cast<int>(n.size()) == scheme.grid().age_nodes() && n.size() == l.size()) {
    project(scheme, mode, n, l);
    if (all_zero(n) && all_zero(l)) throw DomainError("terminal data vanish on the observed components");
  }
  const auto adj = solve_adjoint(scheme, n, l, p, mode);
  const Forms f = quotient_forms(scheme, adj);
  return Quotient::from(f.num, f.den);
}

ObservabilityReport estimate_constant(const Scheme& scheme, std::span<const double> p,
                                      const ObservabilityOptions& opts) {
  if (opts.probes < 1) throw ConfigError("observability needs at least one probe");
  if (opts.power_iters < 0) throw ConfigError("power_iters must be non-negative");
  const CharGrid& g = scheme.grid();
  if (static_cast<int>(p.size()) != g.time_nodes())
    throw DimensionError("frozen trace has " + std::to_string(p.size()) + " entries, grid has " +
                         std::to_string(g.time_nodes()) + " time levels");
  const int na = g.age_nodes();
  const Pencil pencil(scheme, p, opts.mode);

  // Probe list: Gaussian data first, then unit data per node and component.
  std::vector<std::vector<double>> probes;
  for (int k = 0; k < opts.probes; ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> nd;
    std::vector<double> x(2 * na);
    for (auto& v : x) v = nd(rng);
    pencil.project_stacked(x);
    probes.push_back(std::move(x));
  }
  if (opts.unit_probes)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < na; ++i) {
        std::vector<double> x(2 * na, 0.0);
        x[c * na + i] = 1.0;
        pencil.project_stacked(x);
        if (!all_zero(x)) probes.push_back(std::move(x));
      }

  std::vector<Quotient> q(probes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < probes.size(); ++k) q[k] = stacked_ratio(scheme, probes[k], p, opts.mode);

  ObservabilityReport rep;
  rep.geometry = scheme.geometry();
  rep.grid = g;
  rep.threshold_margin = time_margin(scheme.geometry(), g.A);
  rep.quotient_samples = q;
  for (const auto& s : q) {
    if (s.unbounded)
      ++rep.unbounded_samples;
    else
      rep.estimated_constant = std::max(rep.estimated_constant, s.value);
  }

  if (opts.power_iters > 0 && opts.probes > 0) {
    // start from the best finite sample
    std::size_t start = 0;
    for (std::size_t k = 0; k < q.size(); ++k)
      if (!q[k].unbounded && q[k].value > q[start].value) start = k;
    std::vector<double> x = probes[start];
    const double scale = q[start].denominator / std::max(dot(x, x), std::numeric_limits<double>::min());
    const double delta = opts.regularization * scale;
    double best = 0.0;
    for (int it = 0; it < opts.power_iters; ++it) {
      auto z = solve_shifted(pencil, delta, pencil.apply_B(x), opts.inner_cg_iters, opts.inner_cg_tol);
      pencil.project_stacked(z);
      const double nz = std::sqrt(dot(z, z));
      if (!(nz > 0.0) || !std::isfinite(nz)) break;
      for (auto& v : z) v /= nz;
      x = std::move(z);
      const Quotient qi = stacked_ratio(scheme, x, p, opts.mode);
      if (qi.unbounded) {
        ++rep.unbounded_samples;
        break;
      }
      best = std::max(best, qi.value);
    }
    rep.power_estimate = best;
    rep.estimated_constant = std::max(rep.estimated_constant, best);
  }
  rep.diverged = rep.unbounded_samples > 0 || rep.estimated_constant > opts.divergence_threshold;
  return rep;
}

TraceSpread estimate_across_traces(const Scheme& scheme, const std::vector<std::vector<double>>& traces,
                                   const ObservabilityOptions& opts) {
  if (traces.empty()) throw ConfigError("at least one trace is required");
  TraceSpread out;
  for (const auto& p : traces) {
    const auto rep = estimate_constant(scheme, p, opts);
    out.estimates.push_back(rep.estimated_constant);
    out.any_diverged = out.any_diverged || rep.diverged;
  }
  const auto [lo, hi] = std::minmax_element(out.estimates.begin(), out.estimates.end());
  out.spread = *lo > 0.0 ? (*hi - *lo) / *lo : std::numeric_limits<double>::infinity();
  return out;
}

GeometryReport geometry_threshold_check(const ControlGeometry& geom, double A) {
  GeometryReport r;
  r.margin_theorem1 = geom.T - (geom.a1 + A - geom.a2);
  r.margin_theorem2_male = geom.T - (A - geom.a2);
  r.margin_theorem2_female = r.margin_theorem1;
  const double width = geom.a2 - geom.a1;
  if (width <= 0.0) return r;

  // a0 in (a1, a2) with T > A - a0: take a0 just below a2.
  if (r.margin_theorem2_male > 0.0) {
    r.lemma1_kappa = std::min(width, r.margin_theorem2_male) / 2.0;
    r.lemma1_a0 = geom.a2 - r.lemma1_kappa;
    r.lemma1_witness = r.lemma1_a0 > geom.a1 && geom.T > A - r.lemma1_a0;
  }
  // kappa > 0 and a0 in (a1 + kappa, a2) with T - (a1 + kappa) > A - a0.
  if (r.margin_theorem1 > 0.0) {
    r.lemma2_kappa = std::min(width, r.margin_theorem1) / 4.0;
    r.lemma2_a0 = geom.a2 - r.lemma2_kappa;
    r.lemma2_witness = r.lemma2_a0 > geom.a1 + r.lemma2_kappa &&
                       geom.T - (geom.a1 + r.lemma2_kappa) > A - r.lemma2_a0;
  }
  return r;
}

UnreachableSet unreachable_terminal_ages(const Scheme& scheme, std::span<const double> p) {
  const CharGrid& g = scheme.grid();
  if (static_cast<int>(p.size()) != g.time_nodes()) throw DimensionError("trace length does not match the grid");
  const double gamma = scheme.model().gamma;
  const auto& w = scheme.age_weights();
  const auto& wt = scheme.time_weights();
  const auto& sm = scheme.survival_m();
  const auto& sf = scheme.survival_f();
  const auto& srcm = scheme.source_m();
  const auto& srcf = scheme.source_f();
  const int na = g.age_nodes();

  std::vector<char> rm(na, 0), rf(na, 0);
  for (int i = 0; i < na; ++i) {
    rm[i] = srcm[i] != 0.0 && wt[0] != 0.0;
    rf[i] = srcf[i] != 0.0 && wt[0] != 0.0;
  }
  for (int n = 0; n < g.Nt; ++n) {
    std::vector<char> nm(na, 0), nf(na, 0);
    for (int i = 1; i < na; ++i) {
      nm[i] = (rm[i - 1] && sm[i] != 0.0) || (srcm[i] != 0.0 && wt[n + 1] != 0.0);
      nf[i] = (rf[i - 1] && sf[i] != 0.0) || (srcf[i] != 0.0 && wt[n + 1] != 0.0);
    }
    const auto beta = scheme.beta_nodes(p[n + 1]);
    bool births = false;
    for (int j = 1; j < na && !births; ++j) births = nf[j] && w[j] * beta[j] != 0.0;
    nm[0] = births && gamma != 1.0;
    nf[0] = births && gamma != 0.0;
    rm.swap(nm);
    rf.swap(nf);
  }

  UnreachableSet u;
  u.male.resize(na);
  u.female.resize(na);
  std::vector<double> im(na, 0.0), iff(na, 0.0);
  for (int i = 0; i < na; ++i) {
    u.male[i] = !rm[i];
    u.female[i] = !rf[i];
    // a = A is left out of the measure: the closed last cell makes it
    // unreachable on every grid.
    if (i == na - 1) continue;
    im[i] = u.male[i] ? 1.0 : 0.0;
    iff[i] = u.female[i] ? 1.0 : 0.0;
  }
  u.male_measure = integrate_age(im, g);
  u.female_measure = integrate_age(iff, g);
  return u;
}

}  // namespace popctrl
