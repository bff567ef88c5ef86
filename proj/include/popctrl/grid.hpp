#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace popctrl {

/// Characteristics-aligned lattice on (0,A) x (0,T) with equal age and time
/// steps, so every node (a_i, t_n) maps to (a_{i+1}, t_{n+1}) along a
/// characteristic.
struct CharGrid {
  double h = 0.0;
  int Na = 0;  // age cells; nodes 0..Na
  int Nt = 0;  // time steps; levels 0..Nt
  double A = 0.0;
  double T = 0.0;

  int age_nodes() const noexcept { return Na + 1; }
  int time_nodes() const noexcept { return Nt + 1; }
  double age(int i) const noexcept { return A * i / Na; }
  double time(int n) const noexcept { return T * n / Nt; }
};

/// Largest h <= target_h with A/h and T/h both integral (to 1e-9 relative).
/// Throws ConfigError when target_h >= min(A,T) or no common step exists.
CharGrid build_grid(double A, double T, double target_h);

/// Scalar field on the grid nodes, stored level by level (time-major).
class Field2D {
 public:
  Field2D() = default;
  explicit Field2D(const CharGrid& grid, double fill = 0.0)
      : na_(grid.age_nodes()), nt_(grid.time_nodes()), data_(std::size_t(na_) * nt_, fill) {}

  double& operator()(int i, int n) { return data_[std::size_t(n) * na_ + i]; }
  double operator()(int i, int n) const { return data_[std::size_t(n) * na_ + i]; }

  std::span<double> level(int n) { return {data_.data() + std::size_t(n) * na_, std::size_t(na_)}; }
  std::span<const double> level(int n) const {
    return {data_.data() + std::size_t(n) * na_, std::size_t(na_)};
  }

  int age_nodes() const noexcept { return na_; }
  int time_nodes() const noexcept { return nt_; }
  bool matches(const CharGrid& grid) const noexcept {
    return na_ == grid.age_nodes() && nt_ == grid.time_nodes();
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Field2D&) const = default;

 private:
  int na_ = 0;
  int nt_ = 0;
  std::vector<double> data_;
};

/// Trapezoid weights on the age nodes: h/2 at both ends, h inside.
std::vector<double> age_weights(const CharGrid& grid);
/// Trapezoid weights on the time levels.
std::vector<double> time_weights(const CharGrid& grid);

/// Composite trapezoid over one age profile. Throws DimensionError when the
/// slice does not have Na+1 entries.
double integrate_age(std::span<const double> slice, const CharGrid& grid);
/// Composite trapezoid over one time trace.
double integrate_time(std::span<const double> trace, const CharGrid& grid);

/// Quadrature-consistent indicator of the age window (lo,hi): 1 strictly
/// inside, 1/2 on a node that coincides with an endpoint, 0 outside.
std::vector<double> region_mask(const CharGrid& grid, double lo, double hi);

/// Samples f(a_i) on the age nodes.
template <typename F>
std::vector<double> sample_ages(const CharGrid& grid, F&& f) {
  std::vector<double> out(grid.age_nodes());
  for (int i = 0; i <= grid.Na; ++i) out[i] = f(grid.age(i));
  return out;
}

/// L2(0,A) norm squared of an age profile (trapezoid).
double age_norm2(std::span<const double> slice, const CharGrid& grid);
/// L2(Q) norm squared of a field (tensor trapezoid).
double field_norm2(const Field2D& field, const CharGrid& grid);

/// CSV with header "age,time,value", outer loop over time, inner over age.
void write_field_csv(std::ostream& os, const Field2D& field, const CharGrid& grid);
void write_field_csv(const std::string& path, const Field2D& field, const CharGrid& grid);
/// Reads a field dump; the grid layout is recovered from the distinct ages
/// and times. Throws ConfigError on malformed input.
Field2D read_field_csv(std::istream& is, CharGrid* grid_out = nullptr);
Field2D read_field_csv(const std::string& path, CharGrid* grid_out = nullptr);

/// Shortest round-trip decimal text of a double.
std::string format_double(double v);

}  // namespace popctrl
