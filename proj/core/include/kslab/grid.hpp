#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kslab/geometry.hpp"

namespace kslab {

/// Uniform cell-centered grid on the square [-L, L]^2 with n cells per axis.
///
/// Cell (i, j) has center (-L + (i + 1/2) h, -L + (j + 1/2) h). Storage is
/// row-major with the y index as the row: flat index = j * n + i.
class Grid2D {
 public:
  /// Throws ArgumentError unless n >= 8, n even and half_width > 0.
  Grid2D(double half_width, int n);

  double half_width() const noexcept { return half_width_; }
  int n() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  double cell_area() const noexcept { return h_ * h_; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  }

  double x(int i) const noexcept { return -half_width_ + (i + 0.5) * h_; }
  double y(int j) const noexcept { return -half_width_ + (j + 0.5) * h_; }
  Vec2 center(int i, int j) const noexcept { return {x(i), y(j)}; }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_) +
           static_cast<std::size_t>(i);
  }

  /// True when p lies in the closed square [-L, L]^2.
  bool contains(const Vec2& p) const noexcept;
  /// True when p lies at least `margin` inside the square.
  bool contains_strictly(const Vec2& p, double margin = 0.0) const noexcept;

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  double half_width_;
  int n_;
  double h_;
};

/// Real values on the cells of a grid. Used for densities and for rates.
class ScalarField {
 public:
  explicit ScalarField(const Grid2D& grid, double fill = 0.0);
  ScalarField(const Grid2D& grid, std::vector<double> values);

  const Grid2D& grid() const noexcept { return grid_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator()(int i, int j) noexcept { return values_[grid_.index(i, j)]; }
  double operator()(int i, int j) const noexcept {
    return values_[grid_.index(i, j)];
  }

  /// h^2 times the sum of all values.
  double integral() const noexcept;
  double max() const noexcept;
  double l1_norm() const noexcept;
  double linf_norm() const noexcept;

 private:
  Grid2D grid_;
  std::vector<double> values_;
};

/// A ScalarField whose values are finite and nonnegative.
class DensityField {
 public:
  explicit DensityField(const Grid2D& grid) : field_(grid) {}
  /// Throws DataError if any value is negative or non-finite.
  explicit DensityField(ScalarField field);
  DensityField(const Grid2D& grid, std::vector<double> values);

  /// Samples f at every cell center. Negative samples are rejected.
  template <class F>
  static DensityField sample(const Grid2D& grid, F&& f) {
    ScalarField s(grid);
    for (int j = 0; j < grid.n(); ++j)
      for (int i = 0; i < grid.n(); ++i) s(i, j) = f(grid.center(i, j));
    return DensityField(std::move(s));
  }

  /// Wraps values without validation; callers guarantee the invariant.
  static DensityField unchecked(ScalarField field);

  const Grid2D& grid() const noexcept { return field_.grid(); }
  std::span<const double> values() const noexcept { return field_.values(); }
  double operator()(int i, int j) const noexcept { return field_(i, j); }
  const ScalarField& scalar() const noexcept { return field_; }
  double max() const noexcept { return field_.max(); }

 private:
  struct Unchecked {};
  DensityField(ScalarField field, Unchecked) : field_(std::move(field)) {}
  ScalarField field_;
};

/// Two-component vector samples at the cell centers.
class VectorField {
 public:
  explicit VectorField(const Grid2D& grid);

  const Grid2D& grid() const noexcept { return grid_; }
  std::span<double> vx() noexcept { return vx_; }
  std::span<double> vy() noexcept { return vy_; }
  std::span<const double> vx() const noexcept { return vx_; }
  std::span<const double> vy() const noexcept { return vy_; }
  Vec2 at(int i, int j) const noexcept {
    const auto k = grid_.index(i, j);
    return {vx_[k], vy_[k]};
  }
  void set(int i, int j, const Vec2& v) noexcept {
    const auto k = grid_.index(i, j);
    vx_[k] = v.x;
    vy_[k] = v.y;
  }
  void add(int i, int j, const Vec2& v) noexcept {
    const auto k = grid_.index(i, j);
    vx_[k] += v.x;
    vy_[k] += v.y;
  }
  VectorField& operator+=(const VectorField& o);
  double max_norm() const noexcept;

 private:
  Grid2D grid_;
  std::vector<double> vx_, vy_;
};

/// h^2 * sum of u.
double total_mass(const DensityField& u) noexcept;

/// Fraction of the total mass sitting in the outermost ring of `width`
/// cells. Zero for an empty field.
double boundary_mass_fraction(const DensityField& u, int width = 1) noexcept;

}  // namespace kslab
