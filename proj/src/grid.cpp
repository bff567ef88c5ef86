#include "popctrl/grid.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "popctrl/errors.hpp"

namespace popctrl {

namespace {

bool near_integer(double x) { return std::abs(x - std::round(x)) <= 1e-9 * std::max(1.0, std::abs(x)); }

}  // namespace

CharGrid build_grid(double A, double T, double target_h) {
  if (!(A > 0.0 && T > 0.0 && target_h > 0.0))
    throw ConfigError("grid needs A > 0, T > 0 and target_h > 0");
  if (target_h >= std::min(A, T))
    throw ConfigError("target_h = " + format_double(target_h) + " must be smaller than min(A,T) = " +
                      format_double(std::min(A, T)));
  const long first = static_cast<long>(std::ceil(A / target_h - 1e-9));
  constexpr long kMaxCells = 1000000;
  for (long k = std::max(first, 1L); k <= kMaxCells; ++k) {
    const double steps = T * static_cast<double>(k) / A;
    if (near_integer(steps)) {
      CharGrid g;
      g.Na = static_cast<int>(k);
      g.Nt = static_cast<int>(std::lround(steps));
      g.A = A;
      g.T = T;
      g.h = A / static_cast<double>(k);
      return g;
    }
  }
  throw ConfigError("no common step <= target_h divides both A = " + format_double(A) +
                    " and T = " + format_double(T));
}

std::vector<double> age_weights(const CharGrid& grid) {
  std::vector<double> w(grid.age_nodes(), grid.h);
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

std::vector<double> time_weights(const CharGrid& grid) {
  std::vector<double> w(grid.time_nodes(), grid.h);
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

double integrate_age(std::span<const double> slice, const CharGrid& grid) {
  if (static_cast<int>(slice.size()) != grid.age_nodes())
    throw DimensionError("age slice has " + std::to_string(slice.size()) + " entries, grid has " +
                         std::to_string(grid.age_nodes()) + " age nodes");
  double sum = 0.5 * (slice.front() + slice.back());
  for (int i = 1; i < grid.Na; ++i) sum += slice[i];
  return sum * grid.h;
}

double integrate_time(std::span<const double> trace, const CharGrid& grid) {
  if (static_cast<int>(trace.size()) != grid.time_nodes())
    throw DimensionError("time trace has " + std::to_string(trace.size()) + " entries, grid has " +
                         std::to_string(grid.time_nodes()) + " time levels");
  double sum = 0.5 * (trace.front() + trace.back());
  for (int n = 1; n < grid.Nt; ++n) sum += trace[n];
  return sum * grid.h;
}

std::vector<double> region_mask(const CharGrid& grid, double lo, double hi) {
  if (!(lo < hi)) throw DomainError("inverted age window (" + format_double(lo) + ", " + format_double(hi) + ")");
  if (lo < 0.0 || hi > grid.A * (1.0 + 1e-12))
    throw DomainError("age window (" + format_double(lo) + ", " + format_double(hi) + ") outside [0, A]");
  const double tol = 1e-9 * grid.h;
  std::vector<double> mask(grid.age_nodes(), 0.0);
  for (int i = 0; i <= grid.Na; ++i) {
    const double a = grid.age(i);
    if (std::abs(a - lo) <= tol || std::abs(a - hi) <= tol)
      mask[i] = 0.5;
    else if (a > lo && a < hi)
      mask[i] = 1.0;
  }
  return mask;
}

double age_norm2(std::span<const double> slice, const CharGrid& grid) {
  std::vector<double> sq(slice.size());
  for (std::size_t i = 0; i < slice.size(); ++i) sq[i] = slice[i] * slice[i];
  return integrate_age(sq, grid);
}

double field_norm2(const Field2D& field, const CharGrid& grid) {
  if (!field.matches(grid)) throw DimensionError("field does not match grid");
  std::vector<double> per_level(grid.time_nodes());
  for (int n = 0; n <= grid.Nt; ++n) per_level[n] = age_norm2(field.level(n), grid);
  return integrate_time(per_level, grid);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_field_csv(std::ostream& os, const Field2D& field, const CharGrid& grid) {
  if (!field.matches(grid)) throw DimensionError("field does not match grid");
  os << "age,time,value\n";
  for (int n = 0; n <= grid.Nt; ++n) {
    const std::string t = format_double(grid.time(n));
    for (int i = 0; i <= grid.Na; ++i)
      os << format_double(grid.age(i)) << ',' << t << ',' << format_double(field(i, n)) << '\n';
  }
}

void write_field_csv(const std::string& path, const Field2D& field, const CharGrid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  write_field_csv(os, field, grid);
}

Field2D read_field_csv(std::istream& is, CharGrid* grid_out) {
  std::string line;
  if (!std::getline(is, line) || line != "age,time,value")
    throw ConfigError("field CSV must start with header 'age,time,value'");
  struct Row {
    double a, t, v;
  };
  std::vector<Row> rows;
  std::map<double, int> ages, times;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    double vals[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 3; ++k) {
      const auto res = std::from_chars(p, end, vals[k]);
      if (res.ec != std::errc()) throw ConfigError("malformed field CSV at line " + std::to_string(lineno));
      p = res.ptr;
      if (k < 2) {
        if (p == end || *p != ',') throw ConfigError("malformed field CSV at line " + std::to_string(lineno));
        ++p;
      }
    }
    rows.push_back({vals[0], vals[1], vals[2]});
    ages.emplace(vals[0], 0);
    times.emplace(vals[1], 0);
  }
  if (ages.size() < 2 || times.size() < 2) throw ConfigError("field CSV needs at least 2 ages and 2 times");
  int k = 0;
  for (auto& [a, idx] : ages) idx = k++;
  k = 0;
  for (auto& [t, idx] : times) idx = k++;
  if (rows.size() != ages.size() * times.size()) throw ConfigError("field CSV is not a full lattice");

  CharGrid g;
  g.Na = static_cast<int>(ages.size()) - 1;
  g.Nt = static_cast<int>(times.size()) - 1;
  g.A = ages.rbegin()->first;
  g.T = times.rbegin()->first;
  g.h = g.A / g.Na;
  Field2D field(g);
  for (const auto& r : rows) field(ages.at(r.a), times.at(r.t)) = r.v;
  if (grid_out) *grid_out = g;
  return field;
}

Field2D read_field_csv(const std::string& path, CharGrid* grid_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  return read_field_csv(is, grid_out);
}

}  // namespace popctrl
