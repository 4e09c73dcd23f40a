// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kslab/cutoff.hpp"
#include "kslab/diagnostics.hpp"
#include "kslab/hybrid.hpp"
#include "kslab/pde.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/profiles.hpp"
#include "kslab/rescale.hpp"

using namespace kslab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <class Field>
double pair_with(const Field& f, const std::function<double(Vec2)>& w) {
  const auto& g = f.grid();
  double s = 0.0;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i) s += f(i, j) * w(g.center(i, j));
  return s * g.cell_area();
}

// --- PDE --------------------------------------------------------------------

Verdict bubble_residual() {
  std::vector<double> l1;
  for (int n : {128, 256, 512}) {
    const auto u = DensityField::sample(Grid2D(20.0, n), Bubble{});
    l1.push_back(pde::rhs(u, {}, 0.0).l1_norm());
  }
  const double r1 = l1[0] / l1[1], r2 = l1[1] / l1[2];
  return {r1 >= 1.7 && r2 >= 1.7,
          fmt("L1 %.3e %.3e %.3e, ratios %.3f %.3f (need >= 1.7)", l1[0], l1[1], l1[2], r1, r2)};
}

Verdict bubble_mass() {
  const double m = total_mass(DensityField::sample(Grid2D(40.0, 1024), Bubble{}));
  const double rel = m / kAtomMass - 1.0;
  return {std::abs(rel) <= 0.01, fmt("mass/8pi = %.6f", m / kAtomMass)};
}

Verdict second_momentum_rate(double m_over_pi) {
  const double m = m_over_pi * kPi;
  const auto u0 = DensityField::sample(Grid2D(8.0, 256), Gaussian{m, 1.0});
  pde::SolverParams sp;
  sp.end_time = 0.1;
  sp.snapshot_every = 1;
  sp.keep_snapshots = false;
  sp.stop_on_concentration = false;
  const auto tr = pde::evolve(u0, {}, sp);
  const double pred = second_momentum_rate_prediction(m);
  // Zero prediction at 8π: measure against the size of either term, 4m.
  const double scale = pred != 0.0 ? std::abs(pred) : 4.0 * m;
  double worst = 0.0, at = 0.0;
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    const auto& a = tr.records[k - 1];
    const auto& b = tr.records[k];
    const double rate = (b.second_momentum - a.second_momentum) / (b.t - a.t);
    if (std::abs(rate - pred) > std::abs(worst)) {
      worst = rate - pred;
      at = b.t;
    }
  }
  return {std::abs(worst) <= 0.02 * scale,
          fmt("m=%gpi predicted %.4f, worst deviation %.4f (%.3f%% of %.3f) at t=%.4f over %zu steps",
              m_over_pi, pred, worst, 100.0 * std::abs(worst) / scale, scale, at, tr.steps)};
}

Verdict second_momentum_rates() {
  Verdict all{true, ""};
  for (double m : {4.0, 8.0, 12.0}) {
    const auto v = second_momentum_rate(m);
    all.pass = all.pass && v.pass;
    all.detail += (all.detail.empty() ? "" : "; ") + v.detail;
  }
  return all;
}

Verdict supercritical_concentration() {
  const Grid2D g(8.0, 256);
  const auto u0 = DensityField::sample(g, Gaussian{12.0 * kPi, 1.0});
  pde::SolverParams sp;
  sp.end_time = 2.0;
  sp.snapshot_every = 200;
  sp.keep_snapshots = false;
  const auto tr = pde::evolve(u0, {}, sp);
  if (!tr.detection) return {false, fmt("no verdict by t=%.4f", tr.t_final)};
  const double r = tr.detection->local_mass_sup / kAtomMass;
  return {r >= 0.8 && r <= 1.2,
          fmt("verdict at t=%.4f, local mass at radius 8h = %.4f x 8pi, peak u %.1f", tr.detection->t, r,
              tr.detection->max_density)};
}

// (1 - |x|^2)^5 on the unit disk. Its laplacian is smooth enough that the
// cell sums converge at second order without the noise a kinked one brings.
struct PolynomialBump {
  double value(const Vec2& x) const {
    const double s = norm2(x);
    return s < 1.0 ? std::pow(1.0 - s, 5) : 0.0;
  }
  Vec2 gradient(const Vec2& x) const {
    const double s = norm2(x);
    return s < 1.0 ? (-10.0 * std::pow(1.0 - s, 4)) * x : Vec2{};
  }
  double laplacian(const Vec2& x) const {
    const double s = norm2(x);
    return s < 1.0 ? -20.0 * std::pow(1.0 - s, 3) * (1.0 - 5.0 * s) : 0.0;
  }
};

Verdict symmetrization_identity() {
  const Grid2D g(8.0, 256);
  const auto u0 = DensityField::sample(g, Gaussian{4.0 * kPi, 0.5, {0.3, 0.0}});
  const PolynomialBump psi;
  pde::SolverParams sp;
  sp.end_time = 0.2;
  sp.snapshot_every = 1;
  sp.keep_snapshots = false;
  const std::size_t steps = pde::evolve(u0, {}, sp).steps;
  if (steps < 42) return {false, fmt("only %zu steps", steps)};
  std::vector<std::size_t> picks;
  for (std::size_t s = 0; s < 20; ++s) picks.push_back(1 + s * (steps - 2) / 19);

  std::vector<double> t, w;
  std::vector<DensityField> kept;
  const pde::Observer obs = [&](const DiagnosticsRecord& rec, const DensityField& u) {
    if (std::find(picks.begin(), picks.end(), t.size()) != picks.end()) kept.push_back(u);
    t.push_back(rec.t);
    w.push_back(pair_with(u, [&](Vec2 x) { return psi.value(x); }));
  };
  pde::evolve(u0, {}, sp, {}, obs);
  const auto samples = sample_test_function(g, psi);
  double worst = 0.0, worst_tol = 0.0;
  bool ok = true;
  for (std::size_t s = 0; s < picks.size(); ++s) {
    const std::size_t k = picks[s];
    const double fd = (w[k + 1] - w[k - 1]) / (t[k + 1] - t[k - 1]);
    const double sym = symmetrization_rate(kept[s], samples, {}, t[k]);
    const double dt = 0.5 * (t[k + 1] - t[k - 1]);
    const double tol = std::max(1e-3, 5.0 * (g.h() * g.h() + dt));
    const double rel = std::abs(fd - sym) / std::abs(fd);
    if (rel > tol) ok = false;
    if (rel > worst) {
      worst = rel;
      worst_tol = tol;
    }
  }
  return {ok, fmt("20 samples over %zu steps, worst relative gap %.3e (tolerance %.3e)", steps, worst,
                  worst_tol)};
}

// --- point dynamics ---------------------------------------------------------

Verdict point_exactness() {
  const double a = 1.3;
  const auto tr = pointdyn::integrate(PointConfiguration({{a, 0}, {-a, 0}}, Frame::PhysicalQ), 0.0, 10.0, {});
  if (!tr.collision) return {false, "no collision"};
  const double T = a * a / 4.0;
  const double t_rel = std::abs(tr.collision->collapse_estimate - T) / T;
  const auto rep = pointdyn::momentum_report(tr, T);
  const double slope_rel = std::abs(rep.second_momentum_slope - rep.derived_slope) / std::abs(rep.derived_slope);
  const bool stated = std::abs(rep.second_momentum_slope - rep.stated_slope) <= 1e-6 * std::abs(rep.stated_slope);
  return {t_rel <= 1e-6 && rep.first_momentum_drift <= 1e-12 && slope_rel <= 1e-6,
          fmt("collapse %.12f vs %.12f (rel %.1e), drift %.1e, slope %.9f vs -4N(N-1) = %g (rel %.1e); "
              "stated 2N(N-1) = %g %s",
              tr.collision->collapse_estimate, T, t_rel, rep.first_momentum_drift,
              rep.second_momentum_slope, rep.derived_slope, slope_rel, rep.stated_slope,
              stated ? "matches" : "does not match")};
}

Verdict critical_points() {
  using namespace pointdyn;
  const auto c1 = find_critical_point(PointConfiguration({{0.7, -0.4}}, Frame::RenormalizedP), {});
  const double e1 = norm(c1.config[0]);
  const auto c2 = find_critical_point(PointConfiguration({{0.3, 0.1}, {-0.6, 0.2}}, Frame::RenormalizedP), {});
  double e2 = 0.0;
  for (const auto& p : c2.config.points()) e2 = std::max(e2, std::abs(norm(p) - 2.0));
  const auto c3 = find_critical_point(
      PointConfiguration({{1.0, 0.2}, {-0.5, 0.9}, {-0.3, -0.8}}, Frame::RenormalizedP), {});
  Vec2 c;
  for (const auto& p : c3.config.points()) c += p / 3.0;
  double e3 = 0.0;
  for (const auto& p : c3.config.points()) e3 = std::max(e3, std::abs(norm(p - c) - 2.0 * std::sqrt(2.0)));

  // Gradient against central differences on a random N = 4 configuration.
  const std::vector<Vec2> p4{{0.31, -0.72}, {-1.05, 0.44}, {0.87, 0.93}, {-0.2, -1.3}};
  double grad_err = 0.0;
  for (auto [energy, gradient] :
       {std::pair{&calW_energy, &calW_gradient}, std::pair{&calW_unordered, &calW_unordered_gradient}}) {
    const auto gr = gradient(p4);
    for (std::size_t j = 0; j < 4; ++j)
      for (int k = 0; k < 2; ++k) {
        auto hi = p4, lo = p4;
        const double e = 1e-6;
        (k == 0 ? hi[j].x : hi[j].y) += e;
        (k == 0 ? lo[j].x : lo[j].y) -= e;
        const double fd = (energy(hi) - energy(lo)) / (2 * e);
        const double an = k == 0 ? gr[j].x : gr[j].y;
        grad_err = std::max(grad_err, std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
  }

  // Energy along every accepted step of a forward flow.
  const auto tr = integrate(PointConfiguration(p4, Frame::RenormalizedP), 0.0, 3.0, {});
  double worst_rise = -1e300;
  for (std::size_t k = 1; k < tr.points.size(); ++k) {
    const double a = calW_unordered(tr.points[k - 1]), b = calW_unordered(tr.points[k]);
    worst_rise = std::max(worst_rise, (b - a) / (1.0 + std::abs(a)));
  }
  const bool ok = e1 < 1e-10 && e2 <= 1e-8 && e3 <= 1e-8 && grad_err < 1e-6 && worst_rise <= 1e-10;
  return {ok, fmt("N=1 |p| %.1e; N=2 ||p|-2| %.1e; N=3 |R-2sqrt2| %.1e; gradient FD %.1e; "
                  "largest energy step %.1e over %zu steps",
                  e1, e2, e3, grad_err, worst_rise, tr.points.size() - 1)};
}

// --- rescaling --------------------------------------------------------------

double free_energy_shift(const DensityField& u, double lambda) {
  // Source centers x map to x/λ; that grid keeps the sample points aligned.
  rescale::RescaleOptions o;
  o.target = Grid2D(u.grid().half_width() / lambda, u.grid().n());
  const auto r = rescale::parabolic_rescale(u, 0.0, lambda, {}, o);
  return free_energy(r.field) - free_energy(u);
}

Verdict free_energy_criticality() {
  const auto bubble = DensityField::sample(Grid2D(20.0, 256), Bubble{});
  const auto gauss = DensityField::sample(Grid2D(8.0, 256), Gaussian{4.0 * kPi, 1.0});
  bool ok = true;
  std::string detail;
  for (double lambda : {0.5, 2.0}) {
    const double sb = free_energy_shift(bubble, lambda);
    const double sg = free_energy_shift(gauss, lambda);
    const double want = 4.0 * kPi * std::log(lambda);
    const bool g_ok = std::abs(sg - want) <= 0.1 * std::abs(want);
    const bool b_ok = std::abs(sb) <= 0.02 * std::abs(sg);
    ok = ok && g_ok && b_ok;
    detail += fmt("lambda=%g: bubble %.4e, 4pi gaussian %.4f (4pi log lambda = %.4f); ", lambda, sb, sg, want);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Verdict blow_down_fit() {
  const Grid2D g(4.0, 512);
  const std::vector<Vec2> p{{2.0, 0.0}, {-2.0, 0.0}};
  const std::vector<double> lambdas{0.25, 0.5, 0.75, 1.0};
  std::vector<io::Snapshot> traj;
  for (double l : lambdas) {
    const double t = -l * l, r = std::sqrt(-t);
    traj.push_back({DensityField::sample(g, [&](Vec2 x) { return Bubble{0.02, r * p[0]}(x) + Bubble{0.02, r * p[1]}(x); }), t});
  }
  ConcentrationThresholds th;
  th.detect_radius = 0.5;
  const auto rep = rescale::blow_down(traj, lambdas, 2, th);
  if (rep.p.size() != 2) return {false, "wrong atom count"};
  const double r0 = norm(rep.p[0]), r1 = norm(rep.p[1]);
  const double anti = norm(rep.p[0] + rep.p[1]) / 2.0;
  const bool ok = std::abs(r0 - 2.0) <= 0.1 && std::abs(r1 - 2.0) <= 0.1 && anti <= 0.05;
  return {ok, fmt("p = (%.5f, %.5f), (%.5f, %.5f); |p| %.5f %.5f; fit error %.2e", rep.p[0].x, rep.p[0].y,
                  rep.p[1].x, rep.p[1].y, r0, r1, rep.fit_error)};
}

// --- hybrid -----------------------------------------------------------------

Verdict hybrid_reductions() {
  using namespace hybrid;
  // No density: the atoms follow the point flow.
  std::vector<Vec2> tri;
  for (int k = 0; k < 3; ++k) tri.push_back({3.0 * std::cos(2 * kPi * k / 3 + 0.2), 3.0 * std::sin(2 * kPi * k / 3 + 0.2)});
  HybridParams p;
  p.solver.end_time = 1.0;
  p.solver.snapshot_every = 1000000;
  const auto h1 = hybrid_evolve(HybridState{tri, DensityField(Grid2D(8.0, 64)), 0.0}, {}, p);
  const auto ref = pointdyn::integrate(PointConfiguration(tri, Frame::PhysicalQ), 0.0, 1.0, {});
  double atom_err = 0.0;
  for (std::size_t j = 0; j < 3; ++j) atom_err = std::max(atom_err, norm(h1.states.back().atoms[j] - ref.final_points()[j]));
  const bool a_ok = h1.stop == HybridStop::EndTime && atom_err <= 1e-6;

  // No atoms: the density follows the pde bit for bit.
  const Grid2D g(4.0, 64);
  const auto rho = DensityField::sample(g, Gaussian{4.0 * kPi, 0.6, {0.2, -0.1}});
  HybridParams q;
  q.solver.end_time = 0.05;
  const auto h2 = hybrid_evolve(HybridState{{}, rho, 0.0}, {}, q);
  const auto u = pde::evolve(rho, {}, q.solver);
  const auto& hv = h2.states.back().rho.values();
  const auto& uv = u.final_state->values();
  const bool b_ok = h2.steps == u.steps && std::equal(hv.begin(), hv.end(), uv.begin(), uv.end());

  // Radially symmetric density about a lone atom: no drift.
  HybridState s{{{0.0, 0.0}}, DensityField::sample(g, Gaussian{2.0, 0.5}), 0.0};
  double drift = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    auto r = hybrid_step(s, {}, HybridParams{}, k);
    drift = std::max(drift, norm(r.state.atoms[0] - s.atoms[0]));
    s = std::move(r.state);
  }
  const bool c_ok = drift < 1e-10;
  return {a_ok && b_ok && c_ok,
          fmt("atoms vs point flow %.2e over t=1 (%zu steps); zero-atom run %s over %zu steps; "
              "symmetric drift %.1e per step",
              atom_err, h1.steps, b_ok ? "bit-identical" : "differs", u.steps, drift)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all{
      {"stationary bubble residual", 60, bubble_residual},
      {"bubble mass quantization", 5, bubble_mass},
      {"second-momentum rate", 900, second_momentum_rates},
      {"supercritical concentration", 600, supercritical_concentration},
      {"symmetrization identity", 120, symmetrization_identity},
      {"point-dynamics exactness", 10, point_exactness},
      {"critical points of the renormalized energy", 10, critical_points},
      {"free-energy criticality", 120, free_energy_criticality},
      {"blow-down self-similar fit", 300, blow_down_fit},
      {"hybrid reductions", 120, hybrid_reductions},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = v.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s %s: %s [%.1fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures;
}
