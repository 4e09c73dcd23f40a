#pragma once

#include <cmath>

#include "kslab/geometry.hpp"
#include "kslab/grid.hpp"

namespace kslab {

/// Stationary bubble 8λ^2 / (λ^2 + |x - c|^2)^2, total mass 8π on R^2.
struct Bubble {
  double lambda = 1.0;
  Vec2 center;

  double operator()(const Vec2& x) const noexcept {
    const double l2 = lambda * lambda;
    const double den = l2 + norm2(x - center);
    return 8.0 * l2 / (den * den);
  }
  double peak() const noexcept { return 8.0 / (lambda * lambda); }
  /// Mass inside the disk of radius r about the center: 8π r^2/(λ^2 + r^2).
  double mass_within(double r) const noexcept {
    return 8.0 * kPi * r * r / (lambda * lambda + r * r);
  }
};

/// Isotropic Gaussian of the given mass and standard deviation.
struct Gaussian {
  double mass = 1.0;
  double width = 1.0;
  Vec2 center;

  double operator()(const Vec2& x) const noexcept {
    const double s2 = width * width;
    return mass / (2.0 * kPi * s2) * std::exp(-norm2(x - center) / (2.0 * s2));
  }
};

}  // namespace kslab
