#include <doctest.h>

#include <cmath>
#include <random>

#include "kslab/errors.hpp"
#include "kslab/potential.hpp"
#include "kslab/profiles.hpp"

using namespace kslab;

namespace {

// Compact C^2 radial bump of unit height on B_R.
double bump(const Vec2& x, const Vec2& c, double R) {
  const double s = norm2(x - c) / (R * R);
  return s < 1.0 ? std::pow(1.0 - s, 3) : 0.0;
}

double max_diff(const VectorField& a, const VectorField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.vx().size(); ++k) {
    m = std::max(m, std::abs(a.vx()[k] - b.vx()[k]));
    m = std::max(m, std::abs(a.vy()[k] - b.vy()[k]));
  }
  return m;
}

}  // namespace

TEST_CASE("zero density has zero field") {
  const DensityField u(Grid2D(2.0, 32));
  CHECK(newtonian_gradient(u).max_norm() == 0.0);
  CHECK(newtonian_gradient_at(u, {0.3, 0.1}) == Vec2{});
}

TEST_CASE("FFT and direct summation agree") {
  for (int n : {16, 32, 64}) {
    const Grid2D g(3.0, n);
    std::mt19937_64 rng(n);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    ScalarField s(g);
    for (auto& v : s.values()) v = d(rng);
    const auto fft = newtonian_gradient(s);
    const auto direct = newtonian_gradient_direct(s);
    CHECK(max_diff(fft, direct) <= 1e-10 * direct.max_norm());
  }
}

TEST_CASE("non-finite input is rejected") {
  const Grid2D g(1.0, 16);
  ScalarField s(g);
  s(2, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(newtonian_gradient(s), DataError);
}

TEST_CASE("bubble gradient matches the closed form") {
  // ∇v = -4x/(1+|x|^2) for the unit bubble; the box truncates the tail.
  double prev = 0.0;
  for (int n : {128, 256, 512}) {
    const Grid2D g(20.0, n);
    const auto u = DensityField::sample(g, Bubble{});
    const auto gv = newtonian_gradient(u);
    double err = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec2 x = g.center(i, j);
        if (norm(x) > 3.0) continue;
        err = std::max(err, norm(gv.at(i, j) + (4.0 / (1.0 + norm2(x))) * x));
      }
    MESSAGE("n=" << n << " max error " << err);
    if (prev > 0.0) CHECK(prev / err > 3.0);
    prev = err;
  }
  const Grid2D g(20.0, 256);
  const auto u = DensityField::sample(g, Bubble{});
  const Vec2 at = newtonian_gradient_at(u, {1.0, 0.0});
  CHECK(at.x == doctest::Approx(-2.0).epsilon(0.01));
  CHECK(std::abs(at.y) < 1e-10);
}

TEST_CASE("shell theorem outside a radial bump") {
  const double R = 0.5;
  const Grid2D g(2.0, 128);
  const auto u = DensityField::sample(g, [&](Vec2 x) { return bump(x, {}, R); });
  const double m = total_mass(u);
  const auto gv = newtonian_gradient(u);
  for (const Vec2 x : {Vec2{3 * R, 0.0}, Vec2{0.0, -3 * R}, Vec2{1.06, 1.06}}) {
    const Vec2 want = (-m / (2.0 * kPi) / norm2(x)) * x;
    const Vec2 got = newtonian_gradient_at(u, x);
    CHECK(norm(got - want) <= 0.005 * norm(want));
  }
  // Grid values at cells lying at radius ~3R.
  const int i = 112;  // x = 1.515625
  const Vec2 xc = g.center(i, 64);
  const Vec2 want = (-m / (2.0 * kPi) / norm2(xc)) * xc;
  CHECK(norm(gv.at(i, 64) - want) <= 0.005 * norm(want));
}

TEST_CASE("point evaluation") {
  const Grid2D g(4.0, 128);
  SUBCASE("radial density about the point cancels") {
    const Vec2 c = g.center(70, 50);
    const auto u = DensityField::sample(g, Gaussian{2.0, 0.3, c});
    CHECK(norm(newtonian_gradient_at(u, c)) < 1e-10);
  }
  SUBCASE("far gaussian acts as a point mass") {
    const double m = 3.0, d = 3.0;
    const auto u = DensityField::sample(g, Gaussian{m, 0.1, {d, 0.0}});
    const Vec2 got = newtonian_gradient_at(u, {0.0, 0.0});
    // ∇v points toward the mass with magnitude m/(2πd).
    CHECK(got.x == doctest::Approx(m / (2.0 * kPi * d)).epsilon(0.01));
    CHECK(std::abs(got.y) < 1e-10);
  }
  SUBCASE("agrees with the grid field at cell centers") {
    const auto u = DensityField::sample(g, Gaussian{1.0, 0.5, {0.4, -0.2}});
    const auto gv = newtonian_gradient(u);
    for (auto [i, j] : {std::pair{10, 20}, std::pair{64, 64}, std::pair{90, 33}}) {
      const Vec2 a = newtonian_gradient_at(u, g.center(i, j));
      CHECK(norm(a - gv.at(i, j)) < 1e-3 * std::max(1e-3, norm(gv.at(i, j))) + 1e-4);
    }
  }
  CHECK_THROWS_AS(newtonian_gradient_at(DensityField(g), {4.5, 0.0}), ArgumentError);
}

TEST_CASE("interaction is antisymmetric") {
  const Grid2D g(4.0, 128);
  const auto u1 = DensityField::sample(g, [](Vec2 x) { return bump(x, {-1.5, 0.3}, 0.6); });
  const auto u2 =
      DensityField::sample(g, [](Vec2 x) { return 2.0 * bump(x, {1.2, -0.5}, 0.8); });
  const auto g1 = newtonian_gradient(u1), g2 = newtonian_gradient(u2);
  Vec2 f12, f21;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      f12 += u1(i, j) * g2.at(i, j);
      f21 += u2(i, j) * g1.at(i, j);
    }
  CHECK(norm(f12 + f21) <= 1e-10 * norm(f12));
}

TEST_CASE("scaling covariance") {
  // w(x) = λ^2 u(λx) has ∇v_w(x) = λ (∇v_u)(λx); with λ = 2 on a box of
  // half the width the two grids share sample points.
  const double lambda = 2.0;
  const Grid2D gu(6.0, 128), gw(3.0, 128);
  const Gaussian G{1.5, 0.6, {0.2, -0.1}};
  const auto u = DensityField::sample(gu, G);
  const auto w = DensityField::sample(gw, [&](Vec2 x) { return lambda * lambda * G(lambda * x); });
  const auto vu = newtonian_gradient(u), vw = newtonian_gradient(w);
  double err = 0.0;
  for (int j = 0; j < 128; ++j)
    for (int i = 0; i < 128; ++i)
      err = std::max(err, norm(vw.at(i, j) - lambda * vu.at(i, j)));
  CHECK(err <= 1e-12 * vw.max_norm());
}

TEST_CASE("self-cell log mean") {
  // Midpoint rule for the mean of log|x| over [-1/2, 1/2]^2.
  const int m = 2000;
  double s = 0.0;
  for (int b = 0; b < m; ++b)
    for (int a = 0; a < m; ++a) {
      const double x = -0.5 + (a + 0.5) / m, y = -0.5 + (b + 0.5) / m;
      s += 0.5 * std::log(x * x + y * y);
    }
  CHECK(log_self_cell_mean() == doctest::Approx(s / (double(m) * m)).epsilon(1e-5));
}
