#include "kslab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/io.hpp"
#include "kslab/parallel.hpp"
#include "kslab/potential.hpp"

namespace kslab {

std::string DiagnosticsRecord::to_ndjson() const {
  using io::format_double;
  std::ostringstream os;
  os << "{\"t\":" << format_double(t) << ",\"mass\":" << format_double(mass)
     << ",\"m2\":" << format_double(second_momentum)
     << ",\"F\":" << format_double(free_energy)
     << ",\"entropy\":" << format_double(entropy)
     << ",\"max_u\":" << format_double(max_density)
     << ",\"local_mass_sup\":" << format_double(local_mass_sup) << ",\"m1\":["
     << format_double(first_momentum.x) << ',' << format_double(first_momentum.y)
     << "],\"concentration\":" << (concentration_flag ? "true" : "false") << '}';
  return os.str();
}

double weighted_mass(const DensityField& u, const CutoffFunction& psi) {
  const auto& g = u.grid();
  double s = 0.0;
  for (int j = 0; j < g.n(); ++j)
    for (int i = 0; i < g.n(); ++i)
      if (u(i, j) != 0.0) s += u(i, j) * psi.value(g.center(i, j));
  return s * g.cell_area();
}

Vec2 weighted_first_moment(const DensityField& u, const CutoffFunction& psi) {
  const auto& g = u.grid();
  Vec2 s;
  for (int j = 0; j < g.n(); ++j) {
    for (int i = 0; i < g.n(); ++i) {
      if (u(i, j) == 0.0) continue;
      const Vec2 x = g.center(i, j);
      s += (u(i, j) * psi.value(x)) * x;
    }
  }
  return g.cell_area() * s;
}

double weighted_second_moment(const DensityField& u, const CutoffFunction& psi) {
  const auto& g = u.grid();
  double s = 0.0;
  for (int j = 0; j < g.n(); ++j) {
    for (int i = 0; i < g.n(); ++i) {
      if (u(i, j) == 0.0) continue;
      const Vec2 x = g.center(i, j);
      s += u(i, j) * psi.value(x) * norm2(x - psi.center());
    }
  }
  return s * g.cell_area();
}

double theta_double_sum(const DensityField& u, const TestSamples& psi) {
  const auto& g = u.grid();
  const auto vals = u.values();
  std::vector<std::size_t> active, occupied;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (vals[k] == 0.0) continue;
    occupied.push_back(k);
    if (psi.gradient[k].x != 0.0 || psi.gradient[k].y != 0.0) active.push_back(k);
  }
  const int n = g.n();
  auto pos = [&](std::size_t k) {
    return g.center(static_cast<int>(k % n), static_cast<int>(k / n));
  };
  // Ordered pairs (x, y) with x active: Θ(x, y) for y active, and twice
  // Θ(x, y) for y inactive (the mirrored pair has the same value).
  std::vector<double> partial(active.size(), 0.0);
  parallel_for(0, active.size(), [&](std::size_t a) {
    const std::size_t kx = active[a];
    const Vec2 x = pos(kx);
    const Vec2 gx = psi.gradient[kx];
    double s = 0.0;
    for (std::size_t ky : occupied) {
      if (ky == kx) continue;
      const Vec2 d = x - pos(ky);
      const Vec2 gy = psi.gradient[ky];
      const bool y_active = gy.x != 0.0 || gy.y != 0.0;
      const double th = dot(d, gx - gy) / norm2(d);
      s += (y_active ? 1.0 : 2.0) * th * vals[ky];
    }
    partial[a] = s * vals[kx];
  });
  double total = 0.0;
  for (double p : partial) total += p;
  const double h2 = g.cell_area();
  return total * h2 * h2;
}

double symmetrization_rate(const DensityField& u, const TestSamples& psi,
                           const ForcingSpec& forcing, double t) {
  const auto& g = u.grid();
  const auto vals = u.values();
  double lap = 0.0, drift = 0.0, source = 0.0;
  for (int j = 0; j < g.n(); ++j) {
    for (int i = 0; i < g.n(); ++i) {
      const auto k = g.index(i, j);
      const Vec2 x = g.center(i, j);
      lap += vals[k] * psi.laplacian[k];
      if (forcing.has_drift() && vals[k] != 0.0) {
        drift += vals[k] * dot(forcing.grad_f(x, t), psi.gradient[k]);
      }
      if (forcing.has_source()) source += forcing.g(x, t) * psi.value[k];
    }
  }
  const double h2 = g.cell_area();
  double rate = (lap + drift + source) * h2;
  if (forcing.self_attraction) rate -= theta_double_sum(u, psi) / (4.0 * kPi);
  return rate;
}

double second_momentum_rate_prediction(double m) {
  return 4.0 * m - m * m / (2.0 * kPi);
}

Measure Measure::from_hybrid(const HybridState& s) {
  Measure mu;
  for (const auto& q : s.atoms) mu.atoms.emplace_back(q, kAtomMass);
  mu.density = s.rho;
  return mu;
}

double phi_kernel(const Vec2& x, const Vec2& y, const CutoffFunction& psi) {
  const Vec2 d = x - y;
  const double r2 = norm2(d);
  if (r2 < 1e-28) return 0.0;
  const Vec2 c = psi.center();
  const Vec2 xr = x - c, yr = y - c;
  const double px = psi.value(x), py = psi.value(y);
  const Vec2 cross = (px * (1.0 - py)) * xr - (py * (1.0 - px)) * yr;
  const Vec2 grad = norm2(xr) * psi.gradient(x) - norm2(yr) * psi.gradient(y);
  return dot(d, cross) / (2.0 * kPi * r2) + dot(d, grad) / (4.0 * kPi * r2);
}

double localized_m2_rate(const Measure& mu, const CutoffFunction& psi) {
  struct Weighted {
    Vec2 x;
    double w;
    int zone;  // 0: psi == 1 and flat, 1: psi == 0 and flat, 2: transition
  };
  std::vector<Weighted> pts;
  auto zone_of = [&](const Vec2& x) {
    if (psi.in_transition(x)) return 2;
    return psi.value(x) == 1.0 ? 0 : 1;
  };
  for (const auto& [q, m] : mu.atoms) {
    if (m != 0.0) pts.push_back({q, m, zone_of(q)});
  }
  if (mu.density) {
    const auto& g = mu.density->grid();
    for (int j = 0; j < g.n(); ++j) {
      for (int i = 0; i < g.n(); ++i) {
        const double v = (*mu.density)(i, j);
        if (v == 0.0) continue;
        const Vec2 x = g.center(i, j);
        pts.push_back({x, v * g.cell_area(), zone_of(x)});
      }
    }
  }
  const Vec2 c = psi.center();
  double a = 0.0, local = 0.0;
  for (const auto& p : pts) {
    const Vec2 xr = p.x - c;
    a += p.w * psi.value(p.x);
    local += p.w * (norm2(xr) * psi.laplacian(p.x) + 4.0 * dot(xr, psi.gradient(p.x)));
  }
  std::vector<double> partial(pts.size(), 0.0);
  parallel_for(0, pts.size(), [&](std::size_t ia) {
    const auto& p = pts[ia];
    double s = 0.0;
    for (std::size_t ib = 0; ib < pts.size(); ++ib) {
      if (ib == ia) continue;
      const auto& q = pts[ib];
      if (p.zone == q.zone && p.zone != 2) continue;
      s += q.w * phi_kernel(p.x, q.x, psi);
    }
    partial[ia] = s * p.w;
  });
  double phi_sum = 0.0;
  for (double v : partial) phi_sum += v;
  return 4.0 * a - a * a / (2.0 * kPi) + local - phi_sum;
}

double entropy(const DensityField& u) {
  double s = 0.0;
  for (double v : u.values())
    if (v > 0.0) s += v * std::log(v);
  return s * u.grid().cell_area();
}

double interaction_energy(const DensityField& u) {
  const auto& g = u.grid();
  auto& conv = convolver_for(g.n());
  std::vector<double> lu(g.size());
  conv.convolve(u.values(), conv.log_kernel(), lu);
  const auto vals = u.values();
  double pair = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    pair += vals[k] * lu[k];
    sum += vals[k];
  }
  const double h2 = g.cell_area();
  // log|x - y| = log h + log|d| in cell-offset units d.
  const double mass = sum * h2;
  const double total = mass * mass * std::log(g.h()) + pair * h2 * h2;
  return total / (4.0 * kPi);
}

double free_energy(const DensityField& u) { return entropy(u) + interaction_energy(u); }

ScalarField local_mass_field(const DensityField& u, double r) {
  const auto& g = u.grid();
  const int n = g.n();
  const double h = g.h();
  const int reach = static_cast<int>(std::floor(r / h));
  std::vector<int> half(static_cast<std::size_t>(reach) + 1);
  for (int dj = 0; dj <= reach; ++dj) {
    // Largest di with (di^2 + dj^2) h^2 <= r^2.
    int w = 0;
    while ((w + 1.0) * (w + 1.0) + double(dj) * dj <= (r / h) * (r / h)) ++w;
    half[dj] = w;
  }
  std::vector<double> prefix(static_cast<std::size_t>(n) * (n + 1), 0.0);
  for (int j = 0; j < n; ++j) {
    double* row = &prefix[static_cast<std::size_t>(j) * (n + 1)];
    for (int i = 0; i < n; ++i) row[i + 1] = row[i] + u(i, j);
  }
  ScalarField out(g);
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t jr) {
    const int j = static_cast<int>(jr);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int dj = -reach; dj <= reach; ++dj) {
        const int jj = j + dj;
        if (jj < 0 || jj >= n) continue;
        const int w = half[std::abs(dj)];
        const int lo = std::max(0, i - w), hi = std::min(n, i + w + 1);
        const double* row = &prefix[static_cast<std::size_t>(jj) * (n + 1)];
        s += row[hi] - row[lo];
      }
      out(i, j) = s * g.cell_area();
    }
  });
  return out;
}

LocalMass local_mass_sup(const DensityField& u, double r) {
  const auto& g = u.grid();
  if (!(r > 0.0) || !(r < g.half_width())) {
    throw ArgumentError("local_mass_sup: radius must lie in (0, L)");
  }
  const auto field = local_mass_field(u, r);
  const auto v = field.values();
  const auto it = std::max_element(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(it - v.begin());
  const int n = g.n();
  return {*it, g.center(static_cast<int>(k % n), static_cast<int>(k / n))};
}

double atom_weight(double d, double a) noexcept {
  const double b = 4.0 * a;
  if (d <= a) return d * d;
  if (d >= b) return 4.0 * a * a;
  return 4.0 * a * a - (b - d) * (b - d) / 3.0;
}

namespace {

double atom_weight_slope(double d, double a) noexcept {
  const double b = 4.0 * a;
  if (d <= a) return 2.0 * d;
  if (d >= b) return 0.0;
  return 2.0 * (b - d) / 3.0;
}

struct AtomObjective {
  const DensityField& u;
  double a;
  double total;

  // Cells within 4a of some atom; the rest contribute the constant 4a^2.
  template <class Visit>
  void for_window_cells(const std::vector<Vec2>& p, Visit&& visit) const {
    const auto& g = u.grid();
    const double h = g.h(), L = g.half_width();
    const double b = 4.0 * a;
    std::vector<char> seen(g.size(), 0);
    for (const auto& q : p) {
      const int i0 = std::max(0, static_cast<int>(std::floor((q.x - b + L) / h)));
      const int i1 = std::min(g.n() - 1, static_cast<int>(std::floor((q.x + b + L) / h)));
      const int j0 = std::max(0, static_cast<int>(std::floor((q.y - b + L) / h)));
      const int j1 = std::min(g.n() - 1, static_cast<int>(std::floor((q.y + b + L) / h)));
      for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
          const auto k = g.index(i, j);
          if (seen[k] || u(i, j) == 0.0) continue;
          seen[k] = 1;
          visit(i, j);
        }
      }
    }
  }

  std::pair<std::size_t, double> nearest(const std::vector<Vec2>& p, const Vec2& x) const {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double d = norm(x - p[j]);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    return {best, bd};
  }

  double value(const std::vector<Vec2>& p) const {
    const auto& g = u.grid();
    const double cap = 4.0 * a * a;
    double s = 0.0;
    for_window_cells(p, [&](int i, int j) {
      const auto [jn, d] = nearest(p, g.center(i, j));
      s += (atom_weight(d, a) - cap) * u(i, j);
    });
    return cap * total + s * g.cell_area();
  }

  // Gradient and per-atom curvature estimate (mass-weighted ω'').
  void gradient(const std::vector<Vec2>& p, std::vector<Vec2>& grad,
                std::vector<double>& curv) const {
    const auto& g = u.grid();
    grad.assign(p.size(), {});
    curv.assign(p.size(), 0.0);
    for_window_cells(p, [&](int i, int j) {
      const Vec2 x = g.center(i, j);
      const auto [jn, d] = nearest(p, x);
      if (d <= 0.0) {
        curv[jn] += 2.0 * u(i, j);
        return;
      }
      const double w = atom_weight_slope(d, a) * u(i, j);
      grad[jn] += (w / d) * (p[jn] - x);
      if (d <= a) curv[jn] += 2.0 * u(i, j);
    });
    for (auto& v : grad) v *= g.cell_area();
    for (auto& c : curv) c *= g.cell_area();
  }
};

std::vector<Vec2> seed_atoms(const DensityField& u, const ScalarField& lm,
                             double r, std::size_t n_atoms) {
  const auto& g = u.grid();
  const int n = g.n();
  std::vector<std::size_t> maxima;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double v = lm(i, j);
      if (v <= 0.0) continue;
      bool is_max = true;
      for (int dj = -1; dj <= 1 && is_max; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          const int ii = i + di, jj = j + dj;
          if ((di == 0 && dj == 0) || ii < 0 || jj < 0 || ii >= n || jj >= n) continue;
          if (lm(ii, jj) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) maxima.push_back(g.index(i, j));
    }
  }
  const auto vals = lm.values();
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  auto pick = [&](double separation) {
    std::vector<Vec2> seeds;
    for (std::size_t k : maxima) {
      const Vec2 x = g.center(static_cast<int>(k % n), static_cast<int>(k / n));
      bool ok = true;
      for (const auto& s : seeds) ok = ok && norm(s - x) >= separation;
      if (ok) seeds.push_back(x);
      if (seeds.size() == n_atoms) break;
    }
    return seeds;
  };
  auto seeds = pick(2.0 * r);
  if (seeds.size() < n_atoms) seeds = pick(r);
  return seeds;
}

}  // namespace

AtomFit detect_atoms(const DensityField& u, const ConcentrationThresholds& th,
                     std::size_t n_atoms, const DetectOptions& opts) {
  th.validate();
  if (n_atoms < 1) throw ArgumentError("detect_atoms: need n_atoms >= 1");
  const auto& g = u.grid();
  const double r = th.radius_for(g);
  const double total = total_mass(u);
  if (total <= 0.0) throw DetectionFailure("detect_atoms: empty density");
  const auto lm = local_mass_field(u, r);
  auto p = seed_atoms(u, lm, r, n_atoms);
  if (p.size() < n_atoms) {
    throw DetectionFailure("detect_atoms: found only " + std::to_string(p.size()) +
                           " separated local maxima");
  }

  const AtomObjective obj{u, r, total};
  std::vector<Vec2> grad;
  std::vector<double> curv;
  double f = obj.value(p);
  int it = 0;
  bool settled = false;
  for (; it < opts.max_iterations; ++it) {
    obj.gradient(p, grad, curv);
    // Per-atom Newton-like step using the core curvature 2 * (core mass).
    std::vector<Vec2> dir(p.size());
    double max_step = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double c = curv[j] > 0.0 ? curv[j] : 2.0 * total;
      dir[j] = (-1.0 / c) * grad[j];
      max_step = std::max(max_step, norm(dir[j]));
    }
    if (max_step < opts.step_tolerance * std::max(1.0, r)) {
      settled = true;
      break;
    }
    double alpha = 1.0;
    std::vector<Vec2> trial(p.size());
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      // Below the tolerance f differences are roundoff, not descent.
      if (alpha * max_step < opts.step_tolerance * std::max(1.0, r)) break;
      for (std::size_t j = 0; j < p.size(); ++j) trial[j] = p[j] + alpha * dir[j];
      const double ft = obj.value(trial);
      if (ft <= f) {
        p = trial;
        f = ft;
        moved = true;
        break;
      }
    }
    if (!moved) {
      settled = true;  // no descent along the step: stationary to roundoff
      break;
    }
  }
  if (!settled) {
    throw DetectionFailure("detect_atoms: objective did not settle in " +
                           std::to_string(opts.max_iterations) + " iterations");
  }

  double claimed = 0.0;
  for (int j = 0; j < g.n(); ++j) {
    for (int i = 0; i < g.n(); ++i) {
      const Vec2 x = g.center(i, j);
      for (const auto& q : p) {
        if (norm(x - q) <= r) {
          claimed += u(i, j);
          break;
        }
      }
    }
  }
  claimed *= g.cell_area();
  AtomFit fit{PointConfiguration(p, Frame::PhysicalQ)};
  fit.residual_mass = std::max(0.0, total - claimed);
  fit.residual_fraction = fit.residual_mass / total;
  fit.objective = f;
  fit.genuine = fit.residual_fraction <= th.residual_verdict_fraction;
  fit.iterations = it;
  return fit;
}

DiagnosticsRecord make_record(const DensityField& u, double t,
                              const ConcentrationThresholds& th) {
  const auto& g = u.grid();
  DiagnosticsRecord rec;
  rec.t = t;
  double m = 0.0, m2 = 0.0;
  Vec2 m1;
  for (int j = 0; j < g.n(); ++j) {
    for (int i = 0; i < g.n(); ++i) {
      const double v = u(i, j);
      const Vec2 x = g.center(i, j);
      m += v;
      m1 += v * x;
      m2 += v * norm2(x);
    }
  }
  const double h2 = g.cell_area();
  rec.mass = m * h2;
  rec.first_momentum = h2 * m1;
  rec.second_momentum = m2 * h2;
  rec.entropy = entropy(u);
  rec.free_energy = rec.entropy + interaction_energy(u);
  rec.max_density = u.max();
  const auto lm = local_mass_sup(u, th.radius_for(g));
  rec.local_mass_sup = std::min(lm.mass, rec.mass);
  rec.local_mass_location = lm.location;
  rec.concentration_flag = concentration_verdict(rec, th, h2);
  return rec;
}

bool concentration_verdict(const DiagnosticsRecord& rec,
                           const ConcentrationThresholds& th, double cell_area,
                           const DiagnosticsRecord* previous) {
  if (rec.local_mass_sup >= th.verdict_fraction * kAtomMass) return true;
  if (th.max_density_slope > 0.0 && previous && rec.t > previous->t) {
    const double slope = cell_area * (rec.max_density - previous->max_density) /
                         (rec.t - previous->t);
    if (slope > th.max_density_slope) return true;
  }
  return false;
}

}  // namespace kslab
