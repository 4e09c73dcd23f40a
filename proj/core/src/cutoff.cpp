#include "kslab/cutoff.hpp"

#include <cmath>

#include "kslab/errors.hpp"

namespace kslab {

namespace {

// Smoothstep S(s) = 10 s^3 - 15 s^4 + 6 s^5 and its derivatives on [0, 1].
double step(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
double step_d1(double s) { return 30.0 * s * s * (1.0 - s) * (1.0 - s); }
double step_d2(double s) { return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s); }

}  // namespace

CutoffFunction::CutoffFunction(Vec2 center, double r1, double r2)
    : center_(center), r1_(r1), r2_(r2) {
  if (!(r1 > 0.0) || !(r2 > r1) || !std::isfinite(r2)) {
    throw ArgumentError("CutoffFunction: need 0 < r1 < r2");
  }
}

double CutoffFunction::value(const Vec2& x) const noexcept {
  const double r = norm(x - center_);
  if (r <= r1_) return 1.0;
  if (r >= r2_) return 0.0;
  return 1.0 - step((r - r1_) / (r2_ - r1_));
}

Vec2 CutoffFunction::gradient(const Vec2& x) const noexcept {
  const Vec2 d = x - center_;
  const double r = norm(d);
  if (r <= r1_ || r >= r2_) return {};
  const double w = r2_ - r1_;
  const double dpsi_dr = -step_d1((r - r1_) / w) / w;
  return (dpsi_dr / r) * d;
}

double CutoffFunction::laplacian(const Vec2& x) const noexcept {
  const double r = norm(x - center_);
  if (r <= r1_ || r >= r2_) return 0.0;
  const double w = r2_ - r1_;
  const double s = (r - r1_) / w;
  const double d1 = -step_d1(s) / w;
  const double d2 = -step_d2(s) / (w * w);
  return d2 + d1 / r;
}

bool CutoffFunction::in_transition(const Vec2& x) const noexcept {
  const double r = norm(x - center_);
  return r > r1_ && r < r2_;
}

CutoffFunction make_cutoff(Vec2 center, double r1, double r2) {
  return CutoffFunction(center, r1, r2);
}

double WeightedSquareTest::value(const Vec2& x) const noexcept {
  return norm2(x - psi_.center()) * psi_.value(x);
}

Vec2 WeightedSquareTest::gradient(const Vec2& x) const noexcept {
  const Vec2 d = x - psi_.center();
  return 2.0 * psi_.value(x) * d + norm2(d) * psi_.gradient(x);
}

double WeightedSquareTest::laplacian(const Vec2& x) const noexcept {
  const Vec2 d = x - psi_.center();
  return 4.0 * psi_.value(x) + 4.0 * dot(d, psi_.gradient(x)) +
         norm2(d) * psi_.laplacian(x);
}

}  // namespace kslab
