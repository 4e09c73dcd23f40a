#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <span>

#include "kslab/errors.hpp"
#include "kslab/hybrid.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/profiles.hpp"

using namespace kslab;
using namespace kslab::hybrid;

namespace {

bool same(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

std::vector<Vec2> triangle(double r) {
  std::vector<Vec2> p;
  for (int k = 0; k < 3; ++k) p.push_back({r * std::cos(2 * kPi * k / 3 + 0.2), r * std::sin(2 * kPi * k / 3 + 0.2)});
  return p;
}

}  // namespace

TEST_CASE("parameter validation") {
  HybridParams p;
  CHECK_NOTHROW(p.validate());
  p.mollify_cells = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.atom_step_fraction = 0.7;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = {};
  p.min_separation_guard = -1.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  CHECK(HybridParams{}.mollify_radius(Grid2D(4.0, 64)) == doctest::Approx(0.375));
}

TEST_CASE("atom field") {
  const Grid2D g(4.0, 32);
  const Vec2 q{0.3, -0.2};
  const double r = 0.1;
  const auto f = atom_field(g, {q}, r);
  for (auto [i, j] : {std::pair{0, 0}, std::pair{20, 9}, std::pair{31, 16}}) {
    const Vec2 d = g.center(i, j) - q;
    const Vec2 want = (-4.0 / (norm2(d) + r * r)) * d;
    CHECK(norm(f.at(i, j) - want) < 1e-14);
  }
  // Far from the atom it is the point field -4d/|d|^2, the gradient of an
  // 8π mass potential.
  const Vec2 d = g.center(0, 0) - q;
  CHECK(norm(f.at(0, 0) + (4.0 / norm2(d)) * d) < 1e-3 * norm(f.at(0, 0)));
  const auto two = atom_field(g, {q, -q}, r);
  const auto other = atom_field(g, {-q}, r);
  CHECK(norm(two.at(5, 7) - f.at(5, 7) - other.at(5, 7)) < 1e-14);
}

TEST_CASE("density rate") {
  const Grid2D g(4.0, 64);
  const auto rho = DensityField::sample(g, Gaussian{2.0, 0.5, {0.5, 0.0}});
  SUBCASE("without atoms it is the pde rate") {
    const HybridState s{{}, rho, 0.0};
    const auto a = rho_rhs(s, {});
    const auto b = pde::rhs(rho, {}, 0.0);
    CHECK(same(a.values(), b.values()));
  }
  SUBCASE("atoms add a conservative drift") {
    const HybridState s{{{-1.0, 0.0}}, rho, 0.0};
    const auto a = rho_rhs(s, {});
    double net = 0.0, m1 = 0.0;
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) {
        net += a(i, j);
        m1 += a(i, j) * g.x(i);
      }
    CHECK(std::abs(net) * g.cell_area() < 1e-12);
    // The density drifts toward the atom.
    const double m1_free = [&] {
      const auto b = pde::rhs(rho, {}, 0.0);
      double m = 0.0;
      for (int j = 0; j < g.n(); ++j)
        for (int i = 0; i < g.n(); ++i) m += b(i, j) * g.x(i);
      return m;
    }();
    CHECK(m1 < m1_free);
  }
  const HybridState edge{{{3.9, 0.0}}, rho, 0.0};
  CHECK_THROWS_AS(rho_velocity(edge, {}, 0.375), ArgumentError);
}

TEST_CASE("zero-density reduction to point dynamics") {
  const Grid2D g(8.0, 64);
  const HybridState s0{triangle(3.0), DensityField(g), 0.0};
  HybridParams p;
  p.solver.end_time = 1.0;
  p.solver.snapshot_every = 1000000;
  const auto tr = hybrid_evolve(s0, {}, p);
  REQUIRE(tr.stop == HybridStop::EndTime);
  CHECK(tr.states.back().t == 1.0);
  const auto ref = pointdyn::integrate(PointConfiguration(s0.atoms, Frame::PhysicalQ), 0.0, 1.0, {});
  REQUIRE_FALSE(ref.collision);
  double err = 0.0;
  for (std::size_t j = 0; j < 3; ++j) err = std::max(err, norm(tr.states.back().atoms[j] - ref.final_points()[j]));
  MESSAGE("max atom deviation " << err << " after " << tr.steps << " steps");
  CHECK(err <= 1e-6);
  double rho_max = 0.0;
  for (double v : tr.states.back().rho.values()) rho_max = std::max(rho_max, v);
  CHECK(rho_max == 0.0);
}

TEST_CASE("zero-atom reduction to the pde") {
  const Grid2D g(4.0, 64);
  const auto rho = DensityField::sample(g, Gaussian{4.0 * kPi, 0.6, {0.2, -0.1}});
  HybridParams p;
  p.solver.end_time = 0.05;
  p.solver.snapshot_every = 7;
  const auto h = hybrid_evolve(HybridState{{}, rho, 0.0}, {}, p);
  const auto u = pde::evolve(rho, {}, p.solver);
  REQUIRE(h.stop == HybridStop::EndTime);
  CHECK(h.steps == u.steps);
  REQUIRE(u.final_state);
  CHECK(h.states.back().t == u.t_final);
  CHECK(same(h.states.back().rho.values(), u.final_state->values()));
  REQUIRE(h.records.size() == u.records.size());
  for (std::size_t k = 0; k < h.records.size(); ++k) CHECK(h.records[k].to_ndjson() == u.records[k].to_ndjson());
}

TEST_CASE("symmetric density exerts no pull") {
  // The Gaussian is centred on a cell corner so the grid keeps the 4-fold
  // symmetry; the atom sits on that corner.
  const Grid2D g(4.0, 64);
  const HybridState s0{{{0.0, 0.0}}, DensityField::sample(g, Gaussian{2.0, 0.5, {}}), 0.0};
  HybridParams p;
  double worst = 0.0;
  HybridState s = s0;
  for (std::size_t k = 0; k < 20; ++k) {
    auto r = hybrid_step(s, {}, p, k);
    worst = std::max(worst, norm(r.state.atoms[0] - s.atoms[0]));
    s = std::move(r.state);
  }
  CHECK(worst < 1e-10);
  CHECK(norm(pointdyn::hybrid_point_rhs(s0)[0]) < 1e-12);
}

TEST_CASE("step size control") {
  const Grid2D g(8.0, 64);
  HybridParams p;
  const HybridState close{{{0.05, 0.0}, {-0.05, 0.0}}, DensityField(g), 0.0};
  const auto r = hybrid_step(close, {}, p);
  // Closing speed 40 and pair distance 0.1.
  CHECK(r.dt <= p.atom_step_fraction * 0.1 / 40.0 * (1 + 1e-12));
  CHECK(hybrid_step(close, {}, p, 0, 1e-6).dt == 1e-6);
  const auto cap = hybrid_step(HybridState{{{1.0, 0.0}}, DensityField(g), 0.0}, {}, p);
  CHECK(cap.dt <= p.solver.dt_max);
}

TEST_CASE("stops") {
  const Grid2D g(4.0, 64);
  SUBCASE("collision") {
    HybridParams p;
    p.solver.end_time = 1.0;
    p.min_separation_guard = 1e-3;
    // Pair at distance 0.4 collapses at t = 0.01.
    const HybridState s0{{{0.5, 0.5}, {5, 5}, {0.5, 0.1}}, DensityField(Grid2D(8.0, 64)), 0.0};
    const auto tr = hybrid_evolve(s0, {}, p);
    CHECK(tr.stop == HybridStop::Collision);
    REQUIRE(tr.colliding_pair);
    CHECK(tr.colliding_pair->first == 0u);
    CHECK(tr.colliding_pair->second == 2u);
    CHECK(tr.states.back().t == doctest::Approx(0.01).epsilon(0.01));
  }
  SUBCASE("absorbed mass") {
    // A heavy density on top of an atom exceeds eps_star within its radius.
    HybridParams p;
    p.solver.end_time = 1.0;
    const HybridState s0{{{0.0, 0.0}}, DensityField::sample(g, Gaussian{3.0 * kPi, 0.2, {}}), 0.0};
    const auto tr = hybrid_evolve(s0, {}, p);
    CHECK(tr.stop == HybridStop::AbsorbedMass);
    CHECK(tr.steps == 1u);
  }
  SUBCASE("step limit") {
    HybridParams p;
    p.solver.max_steps = 3;
    const auto tr = hybrid_evolve(HybridState{{{1.0, 0.0}}, DensityField(g), 0.0}, {}, p);
    CHECK(tr.stop == HybridStop::MaxSteps);
    CHECK(tr.steps == 3u);
  }
  CHECK(std::string(hybrid_stop_name(HybridStop::AbsorbedMass)) == "absorbed_mass");
}

TEST_CASE("mass near atoms") {
  const Grid2D g(4.0, 128);
  const HybridState s{{{-1.0, 0.0}, {1.0, 0.0}},
                      DensityField::sample(g, Gaussian{1.0, 0.05, {1.0 + g.h() / 2, g.h() / 2}}), 0.0};
  const auto m = rho_mass_near_atoms(s, 0.5);
  CHECK(m[0] < 1e-100);
  CHECK(m[1] == doctest::Approx(total_mass(s.rho)).epsilon(1e-12));
  CHECK(total_mass(s.rho) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("drift forcing moves the density and the atoms") {
  const Grid2D g(4.0, 64);
  ForcingSpec f;
  f.grad_f = [](Vec2, double) { return Vec2{1.0, 0.0}; };
  f.self_attraction = false;
  const HybridState s0{{{-1.0, 0.0}}, DensityField::sample(g, Gaussian{1.0, 0.4, {1.0, 0.0}}), 0.0};
  HybridParams p;
  const auto r = hybrid_step(s0, f, p);
  // Single atom: its velocity is the pull of ρ plus the uniform drift.
  const Vec2 v = pointdyn::hybrid_point_rhs(s0, f)[0];
  CHECK(v.x > 1.0);
  CHECK(norm(r.state.atoms[0] - s0.atoms[0] - r.dt * v) < 1e-3 * r.dt * norm(v));
}
