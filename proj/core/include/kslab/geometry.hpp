#pragma once

#include <cmath>

namespace kslab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) noexcept {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) noexcept {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) noexcept {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr Vec2 operator+(Vec2 a, const Vec2& b) noexcept { return a += b; }
constexpr Vec2 operator-(Vec2 a, const Vec2& b) noexcept { return a -= b; }
constexpr Vec2 operator-(const Vec2& a) noexcept { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) noexcept { return a *= s; }
constexpr Vec2 operator*(Vec2 a, double s) noexcept { return a *= s; }
constexpr Vec2 operator/(Vec2 a, double s) noexcept { return a *= (1.0 / s); }

constexpr double dot(const Vec2& a, const Vec2& b) noexcept {
  return a.x * b.x + a.y * b.y;
}
constexpr double norm2(const Vec2& a) noexcept { return dot(a, a); }
inline double norm(const Vec2& a) noexcept { return std::hypot(a.x, a.y); }

/// Counter-clockwise rotation by `angle` radians.
inline Vec2 rotate(const Vec2& a, double angle) noexcept {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

inline constexpr double kPi = 3.14159265358979323846;
/// Mass carried by one concentration atom.
inline constexpr double kAtomMass = 8.0 * kPi;

}  // namespace kslab
