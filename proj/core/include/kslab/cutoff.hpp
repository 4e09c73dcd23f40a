#pragma once

#include <concepts>

#include "kslab/geometry.hpp"

namespace kslab {

/// Radial C^2 cutoff: 1 on B_{r1}(c), 0 outside B_{r2}(c).
///
/// The bridge is the quintic smoothstep P(s) = 1 - (10 s^3 - 15 s^4 + 6 s^5),
/// s = (|x - c| - r1) / (r2 - r1). First and second derivatives vanish at
/// both junctions. Profile constants: max |P'| = 15/8, max |P''| = 10/sqrt(3),
/// so |grad psi| <= 1.875 / (r2 - r1) and |D^2 psi| <= 5.78 / (r2 - r1)^2
/// plus the curvature term |P'| / (r (r2 - r1)).
class CutoffFunction {
 public:
  /// Throws ArgumentError unless 0 < r1 < r2.
  CutoffFunction(Vec2 center, double r1, double r2);

  const Vec2& center() const noexcept { return center_; }
  double inner_radius() const noexcept { return r1_; }
  double outer_radius() const noexcept { return r2_; }

  double value(const Vec2& x) const noexcept;
  Vec2 gradient(const Vec2& x) const noexcept;
  double laplacian(const Vec2& x) const noexcept;

  /// True where the gradient can be nonzero (the open annulus r1 < r < r2).
  bool in_transition(const Vec2& x) const noexcept;

  static constexpr double kGradientConstant = 1.875;
  static constexpr double kHessianConstant = 5.773502691896258;

 private:
  Vec2 center_;
  double r1_, r2_;
};

CutoffFunction make_cutoff(Vec2 center, double r1, double r2);

/// Any object with value/gradient/laplacian at a point can act as a test
/// function in the moment identities.
template <class T>
concept TestFunction = requires(const T& f, const Vec2& x) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Vec2>;
  { f.laplacian(x) } -> std::convertible_to<double>;
};

/// x -> |x - c|^2 * psi(x) for a cutoff psi centered at c.
class WeightedSquareTest {
 public:
  explicit WeightedSquareTest(const CutoffFunction& psi) : psi_(psi) {}
  double value(const Vec2& x) const noexcept;
  Vec2 gradient(const Vec2& x) const noexcept;
  double laplacian(const Vec2& x) const noexcept;

 private:
  CutoffFunction psi_;
};

}  // namespace kslab
