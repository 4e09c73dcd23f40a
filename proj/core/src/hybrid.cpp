#include "kslab/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/potential.hpp"

namespace kslab::hybrid {

namespace {

void check_atoms(const HybridState& s, double r) {
  const auto& g = s.rho.grid();
  for (std::size_t j = 0; j < s.atoms.size(); ++j) {
    if (!g.contains_strictly(s.atoms[j], r)) {
      throw ArgumentError("atom " + std::to_string(j) +
                          " is too close to the boundary to mollify its field");
    }
  }
}

struct ClosestPair {
  std::size_t j = 0, k = 1;
  double d = std::numeric_limits<double>::infinity();
};

ClosestPair closest_pair(const std::vector<Vec2>& q) {
  ClosestPair c;
  for (std::size_t j = 0; j < q.size(); ++j)
    for (std::size_t k = j + 1; k < q.size(); ++k) {
      const double d = norm(q[k] - q[j]);
      if (d < c.d) c = {j, k, d};
    }
  return c;
}

double min_pair_distance(const std::vector<Vec2>& q) { return closest_pair(q).d; }

// Classical RK4 for the atoms with ρ frozen.
std::vector<Vec2> advance_atoms(const HybridState& s, const ForcingSpec& forcing, double dt,
                                double guard) {
  auto eval = [&](const std::vector<Vec2>& q, double t) {
    HybridState tmp{q, s.rho, t};
    return pointdyn::hybrid_point_rhs(tmp, forcing, guard);
  };
  const std::size_t n = s.atoms.size();
  auto axpy = [n](const std::vector<Vec2>& q, const std::vector<Vec2>& k, double a) {
    std::vector<Vec2> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = q[j] + a * k[j];
    return out;
  };
  const auto& q = s.atoms;
  const auto k1 = eval(q, s.t);
  const auto k2 = eval(axpy(q, k1, 0.5 * dt), s.t + 0.5 * dt);
  const auto k3 = eval(axpy(q, k2, 0.5 * dt), s.t + 0.5 * dt);
  const auto k4 = eval(axpy(q, k3, dt), s.t + dt);
  std::vector<Vec2> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = q[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  return out;
}

double atom_dt(const HybridState& s, const ForcingSpec& forcing, const HybridParams& p) {
  if (s.atoms.size() < 2) return std::numeric_limits<double>::infinity();
  const auto v = pointdyn::hybrid_point_rhs(s, forcing, p.min_separation_guard);
  double vmax = 0.0;
  for (const auto& x : v) vmax = std::max(vmax, norm(x));
  if (vmax == 0.0) return std::numeric_limits<double>::infinity();
  return p.atom_step_fraction * min_pair_distance(s.atoms) / vmax;
}

}  // namespace

void HybridParams::validate() const {
  solver.validate();
  if (!(mollify_cells > 0.0)) throw ArgumentError("HybridParams: mollify_cells must be positive");
  if (!(min_separation_guard > 0.0))
    throw ArgumentError("HybridParams: min_separation_guard must be positive");
  if (!(atom_step_fraction > 0.0 && atom_step_fraction <= 0.5))
    throw ArgumentError("HybridParams: atom_step_fraction must lie in (0, 0.5]");
}

VectorField atom_field(const Grid2D& grid, const std::vector<Vec2>& atoms, double r) {
  VectorField out(grid);
  const double r2 = r * r;
  for (int j = 0; j < grid.n(); ++j) {
    for (int i = 0; i < grid.n(); ++i) {
      const Vec2 x = grid.center(i, j);
      Vec2 v;
      for (const auto& q : atoms) {
        const Vec2 d = x - q;
        v -= (4.0 / (norm2(d) + r2)) * d;
      }
      out.set(i, j, v);
    }
  }
  return out;
}

VectorField rho_velocity(const HybridState& s, const ForcingSpec& forcing, double r) {
  check_atoms(s, r);
  VectorField v = pde::keller_segel_velocity(s.rho, forcing, s.t);
  if (!s.atoms.empty()) v += atom_field(s.rho.grid(), s.atoms, r);
  return v;
}

ScalarField rho_rhs(const HybridState& s, const ForcingSpec& forcing,
                    const HybridParams& params) {
  if (s.atoms.empty()) return pde::rhs(s.rho, forcing, s.t);
  const auto v = rho_velocity(s, forcing, params.mollify_radius(s.rho.grid()));
  ScalarField rate = pde::transport_rate(s.rho, v, true);
  if (forcing.has_source()) {
    const auto& g = s.rho.grid();
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) rate(i, j) += forcing.g(g.center(i, j), s.t);
  }
  return rate;
}

HybridStepResult hybrid_step(const HybridState& s, const ForcingSpec& forcing,
                             const HybridParams& params, std::size_t step_index,
                             std::optional<double> dt_cap) {
  if (s.atoms.empty()) {
    auto r = pde::step(s.rho, forcing, s.t, params.solver, step_index, dt_cap);
    return {HybridState{{}, std::move(r.u), s.t + r.dt}, r.dt};
  }
  const auto& grid = s.rho.grid();
  const double rm = params.mollify_radius(grid);
  check_atoms(s, rm);
  const double guard = params.min_separation_guard;
  const bool explicit_diffusion = params.solver.diffusion == pde::DiffusionMode::Explicit;

  double dt = std::min(params.solver.dt_max,
                       params.solver.cfl *
                           pde::positivity_dt(rho_velocity(s, forcing, rm), explicit_diffusion));
  dt = std::min(dt, atom_dt(s, forcing, params));
  if (dt_cap) dt = std::min(dt, *dt_cap);

  for (int attempt = 0; attempt < 40; ++attempt) {
    HybridState mid{advance_atoms(s, forcing, 0.5 * dt, guard), s.rho, s.t};
    check_atoms(mid, rm);
    const std::vector<Vec2> q_half = mid.atoms;
    const pde::VelocityFn vel = [&](const DensityField& rho, double t) {
      VectorField v = pde::keller_segel_velocity(rho, forcing, t);
      v += atom_field(grid, q_half, rm);
      return v;
    };
    auto r = pde::step_with_velocity(s.rho, vel, forcing, s.t, params.solver, step_index, dt);
    if (r.dt < dt) {
      dt = r.dt;
      continue;
    }
    HybridState half{q_half, std::move(r.u), s.t + 0.5 * dt};
    auto q_end = advance_atoms(half, forcing, 0.5 * dt, guard);
    HybridState out{std::move(q_end), std::move(half.rho), s.t + dt};
    check_atoms(out, rm);
    const auto cp = closest_pair(out.atoms);
    if (out.atoms.size() > 1 && cp.d < guard) {
      std::ostringstream os;
      os << "atoms " << cp.j << " and " << cp.k << " collided at t=" << out.t;
      throw CollisionError(os.str(), cp.j, cp.k, out.t, out.t + cp.d * cp.d / 16.0);
    }
    return {std::move(out), dt};
  }
  throw NumericalFailure("hybrid_step: step size did not settle", step_index, s.t);
}

std::vector<double> rho_mass_near_atoms(const HybridState& s, double r) {
  const auto& g = s.rho.grid();
  std::vector<double> m(s.atoms.size(), 0.0);
  const double r2 = r * r;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) {
      const double v = s.rho(i, j);
      if (v == 0.0) continue;
      for (std::size_t a = 0; a < s.atoms.size(); ++a)
        if (norm2(g.center(i, j) - s.atoms[a]) <= r2) m[a] += v * g.cell_area();
    }
  return m;
}

const char* hybrid_stop_name(HybridStop s) noexcept {
  switch (s) {
    case HybridStop::EndTime: return "end_time";
    case HybridStop::Collision: return "collision";
    case HybridStop::AbsorbedMass: return "absorbed_mass";
    case HybridStop::MaxSteps: return "max_steps";
  }
  return "unknown";
}

HybridTrajectory hybrid_evolve(const HybridState& s0, const ForcingSpec& forcing,
                               const HybridParams& params, const ConcentrationThresholds& th,
                               const HybridObserver& observer) {
  params.validate();
  th.validate();
  s0.validate();
  const auto& sp = params.solver;
  const double radius = th.radius_for(s0.rho.grid());
  const double t_end = s0.t + sp.end_time;
  HybridTrajectory tr;
  HybridState s = s0;

  auto emit = [&] {
    auto rec = make_record(s.rho, s.t, th);
    tr.records.push_back(rec);
    tr.states.push_back(s);
    if (observer) observer(s, rec);
  };
  auto absorbed = [&] {
    for (double m : rho_mass_near_atoms(s, radius))
      if (m > th.eps_star) return true;
    return false;
  };

  emit();
  bool recorded_last = true;
  while (true) {
    const double remaining = t_end - s.t;
    if (remaining <= 1e-14 * std::max(1.0, std::abs(t_end))) {
      tr.stop = HybridStop::EndTime;
      break;
    }
    if (tr.steps >= sp.max_steps) {
      tr.stop = HybridStop::MaxSteps;
      break;
    }
    try {
      auto r = hybrid_step(s, forcing, params, tr.steps, remaining);
      s = std::move(r.state);
      if (r.dt >= remaining) s.t = t_end;
    } catch (const CollisionError& e) {
      tr.stop = HybridStop::Collision;
      tr.colliding_pair = std::make_pair(e.first(), e.second());
      break;
    }
    ++tr.steps;
    recorded_last = false;
    const double frac = boundary_mass_fraction(s.rho);
    if (frac > sp.boundary_mass_limit) {
      std::ostringstream os;
      os << "boundary ring holds " << frac << " of the density mass at t=" << s.t;
      throw BoundaryMassError(os.str(), frac, s.t);
    }
    if (!s.atoms.empty() && tr.steps % sp.detect_every == 0 && absorbed()) {
      emit();
      recorded_last = true;
      tr.stop = HybridStop::AbsorbedMass;
      break;
    }
    if (tr.steps % sp.snapshot_every == 0) {
      emit();
      recorded_last = true;
    }
  }
  if (!recorded_last) emit();
  return tr;
}

}  // namespace kslab::hybrid
