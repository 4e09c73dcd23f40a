#include <doctest.h>

#include <cmath>

#include "kslab/diagnostics.hpp"
#include "kslab/errors.hpp"
#include "kslab/profiles.hpp"
#include "kslab/rescale.hpp"

using namespace kslab;
using namespace kslab::rescale;

namespace {

// Planar affine data are reproduced exactly by bilinear interpolation.
DensityField affine(const Grid2D& g) {
  return DensityField::sample(g, [](Vec2 x) { return 10.0 + 2.0 * x.x - 0.5 * x.y; });
}

std::vector<io::Snapshot> two_bubble_collapse(const Grid2D& g, double width,
                                              const std::vector<double>& times, Vec2 c = {}) {
  std::vector<io::Snapshot> v;
  for (double t : times) {
    const double r = std::sqrt(-t);
    auto f = [&](Vec2 x) { return Bubble{width, c + Vec2{2 * r, 0}}(x) + Bubble{width, c - Vec2{2 * r, 0}}(x); };
    v.push_back({DensityField::sample(g, f), t});
  }
  return v;
}

}  // namespace

TEST_CASE("bilinear sampling") {
  const Grid2D g(2.0, 32);
  const auto u = affine(g);
  CHECK(sample_bilinear(u, g.center(5, 7)) == doctest::Approx(u(5, 7)).epsilon(1e-14));
  for (Vec2 x : {Vec2{0.013, -0.4}, Vec2{1.2, 1.7}, Vec2{-1.9, 0.0}})
    CHECK(sample_bilinear(u, x) == doctest::Approx(10.0 + 2.0 * x.x - 0.5 * x.y).epsilon(1e-13));
  CHECK(sample_bilinear(u, {2.5, 0.0}) == 0.0);
  CHECK(sample_bilinear(u, {0.0, -3.0}) == 0.0);
  // Beyond the outer centers the weight fades toward vacuum.
  const double edge = sample_bilinear(u, {1.99, 0.0});
  CHECK(edge > 0.0);
  CHECK(edge < u(31, 16));
}

TEST_CASE("parabolic rescaling") {
  const Grid2D g(8.0, 128);
  const auto u = DensityField::sample(g, Bubble{1.0});
  SUBCASE("identity") {
    const auto r = parabolic_rescale(u, 0.3, 1.0);
    CHECK(r.t == 0.3);
    CHECK_FALSE(r.partial);
    for (std::size_t k = 0; k < u.values().size(); ++k) CHECK(r.field.values()[k] == doctest::Approx(u.values()[k]).epsilon(1e-13));
  }
  SUBCASE("bubble family is closed under rescaling") {
    // λ^2 U_1(λx) = U_{1/λ}(x); λ = 1/2 keeps the window inside.
    const double lambda = 0.5;
    const auto r = parabolic_rescale(u, 1.0, lambda);
    CHECK(r.t == doctest::Approx(4.0));
    const auto want = DensityField::sample(g, Bubble{1.0 / lambda});
    double err = 0.0;
    for (std::size_t k = 0; k < want.values().size(); ++k) err = std::max(err, std::abs(r.field.values()[k] - want.values()[k]));
    // Bilinear error bound h^2/8 (|u_xx| + |u_yy|) with |D^2 U_1| <= 32.
    CHECK(err <= g.h() * g.h() / 8.0 * 64.0);
  }
  SUBCASE("mass and centering") {
    const Vec2 c{0.7, -0.4};
    const auto gw = DensityField::sample(g, Gaussian{3.0, 0.3, c});
    RescaleOptions o;
    o.target = Grid2D(4.0, 128);
    const auto r = parabolic_rescale(gw, 0.0, 0.5, c, o);
    CHECK(total_mass(r.field) == doctest::Approx(3.0).epsilon(1e-3));
    const auto& rg = r.field.grid();
    Vec2 first;
    for (int j = 0; j < rg.n(); ++j)
      for (int i = 0; i < rg.n(); ++i) first += r.field(i, j) * rg.cell_area() * rg.center(i, j);
    CHECK(norm(first / 3.0) < 1e-3);
  }
  CHECK_THROWS_AS(parabolic_rescale(u, 0.0, 0.0), ArgumentError);
  CHECK_THROWS_AS(parabolic_rescale(u, 0.0, -1.0), ArgumentError);
  CHECK_THROWS_AS(parabolic_rescale(u, 0.0, 2.0), ArgumentError);
  RescaleOptions partial;
  partial.allow_partial = true;
  const auto p = parabolic_rescale(u, 0.0, 2.0, {}, partial);
  CHECK(p.partial);
  CHECK(p.field(0, 0) == 0.0);
}

TEST_CASE("self-similar frame") {
  const Grid2D g(4.0, 64);
  const auto u = DensityField::sample(g, Gaussian{5.0, 0.4, {0.3, 0.1}});
  const double t = -0.25;
  const auto z = to_self_similar(u, t);
  CHECK(z.s == doctest::Approx(-std::log(0.25)));
  CHECK(z.z.grid().half_width() == doctest::Approx(8.0));
  CHECK(total_mass(z.z) == doctest::Approx(total_mass(u)).epsilon(1e-13));
  CHECK(z.z(10, 20) == doctest::Approx(0.25 * u(10, 20)).epsilon(1e-13));
  const auto back = from_self_similar(z);
  CHECK(back.t == doctest::Approx(t).epsilon(1e-14));
  CHECK(back.field.grid().half_width() == doctest::Approx(4.0));
  for (std::size_t k = 0; k < u.values().size(); ++k) CHECK(back.field.values()[k] == doctest::Approx(u.values()[k]).epsilon(1e-13));
  CHECK_THROWS_AS(to_self_similar(u, 0.0), ArgumentError);
  CHECK_THROWS_AS(to_self_similar(u, 0.5), ArgumentError);
}

TEST_CASE("max-point blow-up") {
  const Grid2D g(4.0, 128);
  std::vector<io::Snapshot> tr;
  for (double t : {0.0, 0.1, 0.2}) tr.push_back({DensityField::sample(g, Bubble{0.2 + t, {0.5, 0.5}}), t});
  const Vec2 xi = g.center(g.n() / 2 + 16, g.n() / 2 + 16);
  const auto w = blowup_rescale(tr, xi, 0.1, 4.0, 64);
  CHECK(w.center_index == 1u);
  CHECK(w.center_value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.R == doctest::Approx(std::sqrt(tr[1].field(80, 80))).epsilon(1e-12));
  REQUIRE(w.slices.size() == 3u);
  CHECK(w.slices[1].t == 0.0);
  CHECK(w.slices[2].t == doctest::Approx(w.R * w.R * 0.1).epsilon(1e-12));
  CHECK_THROWS_AS(blowup_rescale(tr, xi, 0.15), ArgumentError);
  const std::vector<io::Snapshot> empty{{DensityField(g), 0.0}};
  CHECK_THROWS_AS(blowup_rescale(empty, {}, 0.0), ArgumentError);
}

TEST_CASE("blow-down of a two-bubble collapse") {
  const Grid2D g(4.0, 256);
  const std::vector<double> lambdas{0.25, 0.5, 0.75, 1.0};
  std::vector<double> times;
  for (double l : lambdas) times.push_back(-l * l);
  ConcentrationThresholds th;
  th.detect_radius = 0.5;
  SUBCASE("antipodal pair of radius 2") {
    const auto rep = blow_down(two_bubble_collapse(g, 0.03, times), lambdas, 2, th);
    REQUIRE(rep.p.size() == 2u);
    for (const auto& p : rep.p) CHECK(norm(p) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(norm(rep.p[0] + rep.p[1]) < 0.05 * 2.0);
    CHECK(rep.fit_error < 0.05);
    CHECK(rep.slices.size() == lambdas.size());
    for (const auto& s : rep.slices) CHECK(s.fit.atoms.size() == 2u);
  }
  SUBCASE("off-center collapse") {
    // λ = 1 would push the window past the source square.
    const Vec2 c{0.4, -0.3};
    const std::vector<double> inner(lambdas.begin(), lambdas.end() - 1);
    const std::vector<double> tin(times.begin(), times.end() - 1);
    const auto rep = blow_down(two_bubble_collapse(g, 0.03, tin, c), inner, 2, th, c);
    for (const auto& p : rep.p) CHECK(norm(p) == doctest::Approx(2.0).epsilon(0.05));
  }
  const auto traj = two_bubble_collapse(g, 0.03, times);
  CHECK_THROWS_AS(blow_down(traj, {}, 2, th), ArgumentError);
  CHECK_THROWS_AS(blow_down(traj, {0.5, 0.25}, 2, th), ArgumentError);
  auto bad = traj;
  bad.push_back({bad.back().field, 0.0});
  CHECK_THROWS_AS(blow_down(bad, lambdas, 2, th), ArgumentError);
}
