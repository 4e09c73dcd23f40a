#include "kslab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

Grid2D::Grid2D(double half_width, int n) : half_width_(half_width), n_(n) {
  if (!(half_width > 0.0) || !std::isfinite(half_width)) {
    throw ArgumentError("Grid2D: half_width must be positive and finite");
  }
  if (n < 8 || n % 2 != 0) {
    std::ostringstream os;
    os << "Grid2D: n must be even and >= 8, got " << n;
    throw ArgumentError(os.str());
  }
  h_ = 2.0 * half_width / n;
}

bool Grid2D::contains(const Vec2& p) const noexcept {
  return std::abs(p.x) <= half_width_ && std::abs(p.y) <= half_width_;
}

bool Grid2D::contains_strictly(const Vec2& p, double margin) const noexcept {
  return std::abs(p.x) < half_width_ - margin &&
         std::abs(p.y) < half_width_ - margin;
}

ScalarField::ScalarField(const Grid2D& grid, double fill)
    : grid_(grid), values_(grid.size(), fill) {}

ScalarField::ScalarField(const Grid2D& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw ArgumentError("ScalarField: value count does not match grid");
  }
}

double ScalarField::integral() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v;
  return s * grid_.cell_area();
}

double ScalarField::max() const noexcept {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double ScalarField::l1_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += std::abs(v);
  return s * grid_.cell_area();
}

double ScalarField::linf_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

DensityField::DensityField(ScalarField field) : field_(std::move(field)) {
  for (double v : field_.values()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DataError("DensityField: values must be finite and nonnegative");
    }
  }
}

DensityField::DensityField(const Grid2D& grid, std::vector<double> values)
    : DensityField(ScalarField(grid, std::move(values))) {}

DensityField DensityField::unchecked(ScalarField field) {
  return DensityField(std::move(field), Unchecked{});
}

VectorField::VectorField(const Grid2D& grid)
    : grid_(grid), vx_(grid.size(), 0.0), vy_(grid.size(), 0.0) {}

VectorField& VectorField::operator+=(const VectorField& o) {
  if (!(o.grid_ == grid_)) throw ArgumentError("VectorField: grid mismatch");
  for (std::size_t k = 0; k < vx_.size(); ++k) {
    vx_[k] += o.vx_[k];
    vy_[k] += o.vy_[k];
  }
  return *this;
}

double VectorField::max_norm() const noexcept {
  double m = 0.0;
  for (std::size_t k = 0; k < vx_.size(); ++k) {
    m = std::max(m, std::hypot(vx_[k], vy_[k]));
  }
  return m;
}

double total_mass(const DensityField& u) noexcept { return u.scalar().integral(); }

double boundary_mass_fraction(const DensityField& u, int width) noexcept {
  const int n = u.grid().n();
  const double total = total_mass(u);
  if (total <= 0.0) return 0.0;
  double ring = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const bool edge = i < width || j < width || i >= n - width || j >= n - width;
      if (edge) ring += u(i, j);
    }
  }
  return ring * u.grid().cell_area() / total;
}

}  // namespace kslab
