#include "kslab/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/parallel.hpp"
#include "kslab/potential.hpp"

namespace kslab::pde {

namespace {

double minmod(double a, double b) noexcept {
  if (a > 0.0 && b > 0.0) return std::min(a, b);
  if (a < 0.0 && b < 0.0) return std::max(a, b);
  return 0.0;
}

Vec2 eval_drift(const ForcingSpec& f, const Vec2& x, double t) {
  Vec2 v;
  try {
    v = f.grad_f(x, t);
  } catch (const std::exception& e) {
    throw ArgumentError(std::string("forcing grad_f not evaluable: ") + e.what());
  }
  if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
    throw ArgumentError("forcing grad_f returned a non-finite value");
  }
  return v;
}

double eval_source(const ForcingSpec& f, const Vec2& x, double t) {
  double g;
  try {
    g = f.g(x, t);
  } catch (const std::exception& e) {
    throw ArgumentError(std::string("forcing g not evaluable: ") + e.what());
  }
  if (!std::isfinite(g)) throw ArgumentError("forcing g returned a non-finite value");
  return g;
}

void add_source(ScalarField& rate, const ForcingSpec& f, double t) {
  if (!f.has_source()) return;
  const auto& g = rate.grid();
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) rate(i, j) += eval_source(f, g.center(i, j), t);
}

// Backward Euler for the cell-centered Neumann Laplacian, split by axis:
// x = (I - dt Dyy)^{-1} (I - dt Dxx)^{-1} b. Both factors are tridiagonal
// M-matrices; the Thomas recurrences below only add and multiply
// nonnegative numbers, so a nonnegative b gives a nonnegative x exactly.
struct LineSolve {
  std::vector<double> cp, inv;  // super-diagonal ratio and pivot inverse, both > 0

  LineSolve(int n, double r) : cp(n), inv(n) {
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double diag = 1.0 + r * ((i > 0) + (i < n - 1));
      const double piv = diag - r * prev;
      inv[i] = 1.0 / piv;
      cp[i] = i < n - 1 ? r * inv[i] : 0.0;
      prev = cp[i];
    }
  }
};

void neumann_backward_euler(std::span<const double> in, std::span<double> out, int n,
                            double r) {
  const LineSolve ls(n, r);
  const auto N = static_cast<std::size_t>(n);
  std::copy(in.begin(), in.end(), out.begin());
  parallel_for(0, N, [&](std::size_t j) {
    double* row = out.data() + j * N;
    row[0] *= ls.inv[0];
    for (std::size_t i = 1; i < N; ++i) row[i] = (row[i] + r * row[i - 1]) * ls.inv[i];
    for (std::size_t i = N - 1; i-- > 0;) row[i] += ls.cp[i] * row[i + 1];
  });
  // Sweep the y-axis a whole row at a time.
  double* u = out.data();
  for (std::size_t i = 0; i < N; ++i) u[i] *= ls.inv[0];
  for (std::size_t j = 1; j < N; ++j) {
    double* cur = u + j * N;
    const double* prev = cur - N;
    for (std::size_t i = 0; i < N; ++i) cur[i] = (cur[i] + r * prev[i]) * ls.inv[j];
  }
  for (std::size_t j = N - 1; j-- > 0;) {
    double* cur = u + j * N;
    const double* next = cur + N;
    for (std::size_t i = 0; i < N; ++i) cur[i] += ls.cp[j] * next[i];
  }
}

// Forward-Euler stage u + dt (transport + g), with the diffusion part taken
// implicitly in semi-implicit mode.
ScalarField euler_stage(const DensityField& u, const VectorField& vel,
                        const ForcingSpec& forcing, double t, double dt,
                        bool explicit_diffusion) {
  ScalarField rate = transport_rate(u, vel, explicit_diffusion);
  add_source(rate, forcing, t);
  ScalarField out(u.grid());
  auto o = out.values();
  const auto uv = u.values();
  const auto r = rate.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = uv[k] + dt * r[k];
  if (!explicit_diffusion) out = implicit_diffusion(out, dt);
  return out;
}

void check_stage(const ScalarField& f, std::size_t step, double t) {
  for (double v : f.values()) {
    if (!std::isfinite(v) || v < 0.0) {
      std::ostringstream os;
      os << "step " << step << " at t=" << t << " produced "
         << (std::isfinite(v) ? "a negative density" : "a non-finite density");
      throw NumericalFailure(os.str(), step, t);
    }
  }
}

}  // namespace

void SolverParams::validate() const {
  if (!(dt_max > 0.0)) throw ArgumentError("SolverParams: dt_max must be positive");
  if (!(cfl > 0.0 && cfl < 1.0)) throw ArgumentError("SolverParams: cfl must lie in (0, 1)");
  if (snapshot_every == 0) throw ArgumentError("SolverParams: snapshot_every must be >= 1");
  if (detect_every == 0) throw ArgumentError("SolverParams: detect_every must be >= 1");
  if (end_time < 0.0) throw ArgumentError("SolverParams: end_time must be >= 0");
}

VectorField keller_segel_velocity(const DensityField& u, const ForcingSpec& forcing,
                                  double t) {
  const auto& g = u.grid();
  VectorField v = forcing.self_attraction ? newtonian_gradient(u) : VectorField(g);
  if (forcing.has_drift()) {
    for (int j = 0; j < g.n(); ++j)
      for (int i = 0; i < g.n(); ++i) v.add(i, j, eval_drift(forcing, g.center(i, j), t));
  }
  return v;
}

ScalarField transport_rate(const DensityField& u, const VectorField& velocity,
                           bool with_diffusion) {
  const auto& g = u.grid();
  const int n = g.n();
  const double h = g.h();
  const double inv_h = 1.0 / h;
  const auto vx = velocity.vx();
  const auto vy = velocity.vy();
  auto at = [&](int i, int j) -> double {
    if (i < 0 || j < 0 || i >= n || j >= n) return 0.0;
    return u(i, j);
  };
  ScalarField rate(g);
  // x faces between (i, j) and (i + 1, j).
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const double a = 0.5 * (vx[g.index(i, j)] + vx[g.index(i + 1, j)]);
      const double ui = at(i, j), ur = at(i + 1, j);
      double flux;
      if (a > 0.0) {
        flux = a * (ui + 0.5 * minmod(ui - at(i - 1, j), ur - ui));
      } else {
        flux = a * (ur - 0.5 * minmod(ur - ui, at(i + 2, j) - ur));
      }
      if (with_diffusion) flux -= (ur - ui) * inv_h;
      rate(i, j) -= flux * inv_h;
      rate(i + 1, j) += flux * inv_h;
    }
  }
  // y faces between (i, j) and (i, j + 1).
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double a = 0.5 * (vy[g.index(i, j)] + vy[g.index(i, j + 1)]);
      const double ui = at(i, j), ut = at(i, j + 1);
      double flux;
      if (a > 0.0) {
        flux = a * (ui + 0.5 * minmod(ui - at(i, j - 1), ut - ui));
      } else {
        flux = a * (ut - 0.5 * minmod(ut - ui, at(i, j + 2) - ut));
      }
      if (with_diffusion) flux -= (ut - ui) * inv_h;
      rate(i, j) -= flux * inv_h;
      rate(i, j + 1) += flux * inv_h;
    }
  }
  return rate;
}

double positivity_dt(const VectorField& velocity, bool explicit_diffusion) {
  const auto& g = velocity.grid();
  const int n = g.n();
  const double h = g.h();
  const auto vx = velocity.vx();
  const auto vy = velocity.vy();
  double s_max = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto k = g.index(i, j);
      double s = 0.0;
      if (i > 0) s += std::abs(0.5 * (vx[k] + vx[g.index(i - 1, j)]));
      if (i + 1 < n) s += std::abs(0.5 * (vx[k] + vx[g.index(i + 1, j)]));
      if (j > 0) s += std::abs(0.5 * (vy[k] + vy[g.index(i, j - 1)]));
      if (j + 1 < n) s += std::abs(0.5 * (vy[k] + vy[g.index(i, j + 1)]));
      s_max = std::max(s_max, s);
    }
  }
  const double denom = (explicit_diffusion ? 4.0 / (h * h) : 0.0) + 1.5 * s_max / h;
  return denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
}

ScalarField rhs(const DensityField& u, const ForcingSpec& forcing, double t) {
  const auto vel = keller_segel_velocity(u, forcing, t);
  ScalarField rate = transport_rate(u, vel, true);
  add_source(rate, forcing, t);
  return rate;
}

ScalarField implicit_diffusion(const ScalarField& rhs_field, double dt) {
  const auto& g = rhs_field.grid();
  ScalarField out(g);
  neumann_backward_euler(rhs_field.values(), out.values(), g.n(), dt / (g.h() * g.h()));
  return out;
}

StepResult step_with_velocity(const DensityField& u, const VelocityFn& velocity,
                              const ForcingSpec& forcing, double t,
                              const SolverParams& params, std::size_t step_index,
                              std::optional<double> dt_cap) {
  const bool explicit_diffusion = params.diffusion == DiffusionMode::Explicit;
  const VectorField v0 = velocity(u, t);
  double dt = std::min(params.dt_max, params.cfl * positivity_dt(v0, explicit_diffusion));
  if (dt_cap) dt = std::min(dt, *dt_cap);
  if (!(dt > 0.0)) throw NumericalFailure("non-positive time step", step_index, t);

  for (int attempt = 0; attempt < 60; ++attempt) {
    ScalarField s1 = euler_stage(u, v0, forcing, t, dt, explicit_diffusion);
    check_stage(s1, step_index, t);
    const auto d1 = DensityField::unchecked(std::move(s1));
    const VectorField v1 = velocity(d1, t + dt);
    if (dt > positivity_dt(v1, explicit_diffusion)) {
      dt *= 0.5;
      continue;
    }
    ScalarField s2 = euler_stage(d1, v1, forcing, t + dt, dt, explicit_diffusion);
    auto o = s2.values();
    const auto uv = u.values();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = 0.5 * (uv[k] + o[k]);
    check_stage(s2, step_index, t);
    return {DensityField::unchecked(std::move(s2)), dt};
  }
  throw NumericalFailure("step size collapsed while enforcing positivity", step_index, t);
}

StepResult step(const DensityField& u, const ForcingSpec& forcing, double t,
                const SolverParams& params, std::size_t step_index,
                std::optional<double> dt_cap) {
  const VelocityFn vel = [&forcing](const DensityField& d, double tt) {
    return keller_segel_velocity(d, forcing, tt);
  };
  return step_with_velocity(u, vel, forcing, t, params, step_index, dt_cap);
}

const char* stop_reason_name(StopReason r) noexcept {
  switch (r) {
    case StopReason::EndTime: return "end_time";
    case StopReason::Concentration: return "concentration";
    case StopReason::MaxSteps: return "max_steps";
  }
  return "unknown";
}

Trajectory evolve(const DensityField& u0, const ForcingSpec& forcing,
                  const SolverParams& params, const ConcentrationThresholds& th,
                  const Observer& observer, double t0) {
  params.validate();
  th.validate();
  const auto& grid = u0.grid();
  const double radius = th.radius_for(grid);
  Trajectory tr;
  DensityField u = u0;
  double t = t0;
  const double t_end = t0 + params.end_time;

  auto emit = [&](const DiagnosticsRecord& rec) {
    tr.records.push_back(rec);
    if (params.keep_snapshots) tr.snapshots.push_back({u, t});
    if (observer) observer(rec, u);
  };
  auto check_boundary = [&] {
    const double frac = boundary_mass_fraction(u);
    if (frac > params.boundary_mass_limit) {
      std::ostringstream os;
      os << "boundary ring holds " << frac << " of the mass at t=" << t
         << " (limit " << params.boundary_mass_limit << ")";
      throw BoundaryMassError(os.str(), frac, t);
    }
  };

  check_boundary();
  emit(make_record(u, t, th));
  bool recorded_last = true;
  DiagnosticsRecord probe_prev;
  probe_prev.t = t;
  probe_prev.max_density = u.max();

  while (true) {
    const double remaining = t_end - t;
    if (remaining <= 1e-14 * std::max(1.0, std::abs(t_end))) {
      tr.stop = StopReason::EndTime;
      break;
    }
    if (tr.steps >= params.max_steps) {
      tr.stop = StopReason::MaxSteps;
      break;
    }
    auto res = step(u, forcing, t, params, tr.steps, remaining);
    u = std::move(res.u);
    t = res.dt >= remaining ? t_end : t + res.dt;
    ++tr.steps;
    recorded_last = false;
    check_boundary();

    if (tr.steps % params.detect_every == 0) {
      DiagnosticsRecord probe;
      probe.t = t;
      probe.max_density = u.max();
      probe.local_mass_sup = local_mass_sup(u, radius).mass;
      if (concentration_verdict(probe, th, grid.cell_area(), &probe_prev)) {
        auto rec = make_record(u, t, th);
        rec.concentration_flag = true;
        tr.detection = rec;
        emit(rec);
        recorded_last = true;
        if (params.stop_on_concentration) {
          tr.stop = StopReason::Concentration;
          break;
        }
      }
      probe_prev = probe;
    }
    if (!recorded_last && tr.steps % params.snapshot_every == 0) {
      emit(make_record(u, t, th));
      recorded_last = true;
    }
  }
  if (!recorded_last) emit(make_record(u, t, th));
  tr.t_final = t;
  tr.final_state = u;
  return tr;
}

ForcingSpec self_similar_forcing() {
  ForcingSpec f;
  f.grad_f = [](Vec2 y, double) { return 0.5 * y; };
  return f;
}

ScalarField self_similar_rhs(const SelfSimilarState& state) {
  return rhs(state.z, self_similar_forcing(), state.s);
}

}  // namespace kslab::pde
