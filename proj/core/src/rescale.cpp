#include "kslab/rescale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kslab/errors.hpp"

namespace kslab::rescale {

namespace {

// Weights within this distance of a node snap to it, so grids whose sample
// points coincide with source centers reproduce the samples exactly.
constexpr double kSnap = 1e-10;

double snap(double a) {
  if (a < kSnap) return 0.0;
  if (a > 1.0 - kSnap) return 1.0;
  return a;
}

}  // namespace

double sample_bilinear(const DensityField& u, const Vec2& x) {
  const auto& g = u.grid();
  const double L = g.half_width();
  if (!(std::abs(x.x) <= L && std::abs(x.y) <= L)) return 0.0;
  const int n = g.n();
  const double fx = (x.x + L) / g.h() - 0.5;
  const double fy = (x.y + L) / g.h() - 0.5;
  const int i0 = static_cast<int>(std::floor(fx));
  const int j0 = static_cast<int>(std::floor(fy));
  const double a = snap(fx - i0), b = snap(fy - j0);
  auto at = [&](int i, int j) -> double {
    if (i < 0 || j < 0 || i >= n || j >= n) return 0.0;
    return u(i, j);
  };
  double v = 0.0;
  if (a < 1.0 && b < 1.0) v += (1 - a) * (1 - b) * at(i0, j0);
  if (a > 0.0 && b < 1.0) v += a * (1 - b) * at(i0 + 1, j0);
  if (a < 1.0 && b > 0.0) v += (1 - a) * b * at(i0, j0 + 1);
  if (a > 0.0 && b > 0.0) v += a * b * at(i0 + 1, j0 + 1);
  return v;
}

Rescaled parabolic_rescale(const DensityField& u, double t, double lambda,
                           const Vec2& center, const RescaleOptions& opts) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ArgumentError("parabolic_rescale: lambda must be positive");
  const Grid2D target = opts.target.value_or(u.grid());
  const double L = u.grid().half_width();
  const double reach = lambda * target.half_width();
  const double slack = 1e-12 * L;
  const bool inside = std::abs(center.x) + reach <= L + slack &&
                      std::abs(center.y) + reach <= L + slack;
  if (!inside && !opts.allow_partial)
    throw ArgumentError("parabolic_rescale: window leaves the source domain");

  const double l2 = lambda * lambda;
  ScalarField out(target);
  for (int j = 0; j < target.n(); ++j)
    for (int i = 0; i < target.n(); ++i)
      out(i, j) = l2 * sample_bilinear(u, center + lambda * target.center(i, j));
  return {DensityField::unchecked(std::move(out)), t / l2, !inside};
}

SelfSimilarState to_self_similar(const DensityField& u, double t,
                                 std::optional<Grid2D> target) {
  if (!(t < 0.0)) throw ArgumentError("to_self_similar: t must be negative");
  const double r = std::sqrt(-t);
  RescaleOptions opts;
  opts.target = target.value_or(Grid2D(u.grid().half_width() / r, u.grid().n()));
  auto res = parabolic_rescale(u, t, r, {}, opts);
  return {std::move(res.field), -std::log(-t)};
}

io::Snapshot from_self_similar(const SelfSimilarState& z, std::optional<Grid2D> target) {
  const double t = -std::exp(-z.s);
  const double r = std::sqrt(-t);
  RescaleOptions opts;
  opts.target = target.value_or(Grid2D(z.z.grid().half_width() * r, z.z.grid().n()));
  auto res = parabolic_rescale(z.z, z.s, 1.0 / r, {}, opts);
  return {std::move(res.field), t};
}

BlowupWindow blowup_rescale(const std::vector<io::Snapshot>& traj, const Vec2& x_i,
                            double t_i, double window, int n) {
  if (traj.empty()) throw ArgumentError("blowup_rescale: empty trajectory");
  if (!(window > 0.0)) throw ArgumentError("blowup_rescale: window must be positive");
  std::size_t ci = traj.size();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (std::abs(traj[k].t - t_i) <= 1e-12 * std::max(1.0, std::abs(t_i))) {
      ci = k;
      break;
    }
  }
  if (ci == traj.size()) throw ArgumentError("blowup_rescale: no slice at t_i");
  const double peak = sample_bilinear(traj[ci].field, x_i);
  if (!(peak > 0.0)) throw ArgumentError("blowup_rescale: u(x_i, t_i) must be positive");

  BlowupWindow w;
  w.R = std::sqrt(peak);
  w.center = x_i;
  w.t_center = t_i;
  w.center_index = ci;
  w.center_value = peak / (w.R * w.R);
  RescaleOptions opts;
  opts.target = Grid2D(window, n > 0 ? n : traj[ci].field.grid().n());
  opts.allow_partial = true;
  const double lambda = 1.0 / w.R;
  for (const auto& s : traj) {
    auto r = parabolic_rescale(s.field, s.t - t_i, lambda, x_i, opts);
    w.partial = w.partial || r.partial;
    w.slices.push_back({std::move(r.field), r.t});
  }
  return w;
}

BlowDownReport blow_down(const std::vector<io::Snapshot>& traj,
                         const std::vector<double>& lambdas, std::size_t n_atoms,
                         const ConcentrationThresholds& th, const Vec2& center) {
  if (traj.empty()) throw ArgumentError("blow_down: empty trajectory");
  if (lambdas.empty()) throw ArgumentError("blow_down: no lambda values");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) throw ArgumentError("blow_down: lambda values must be positive");
    if (k > 0 && !(lambdas[k] > lambdas[k - 1]))
      throw ArgumentError("blow_down: lambda values must increase");
  }
  for (const auto& s : traj)
    if (!(s.t < 0.0)) throw ArgumentError("blow_down: slices must have t < 0");

  BlowDownReport rep;
  std::vector<std::vector<Vec2>> p_est;
  for (double lambda : lambdas) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < traj.size(); ++k)
      if (std::abs(traj[k].t + lambda * lambda) < std::abs(traj[best].t + lambda * lambda))
        best = k;
    const auto& src = traj[best];
    auto r = parabolic_rescale(src.field, src.t, lambda, center);
    AtomFit fit = detect_atoms(r.field, th, n_atoms);
    const double root = std::sqrt(-src.t);

    std::vector<Vec2> q(n_atoms), p(n_atoms);
    for (std::size_t j = 0; j < n_atoms; ++j) {
      q[j] = center + lambda * fit.atoms[j];
      p[j] = (1.0 / root) * (q[j] - center);
    }
    if (!p_est.empty()) {
      // Greedy nearest-neighbour match to the first slice's labels.
      const auto& ref = p_est.front();
      std::vector<bool> used(n_atoms, false);
      std::vector<std::size_t> perm(n_atoms);
      for (std::size_t a = 0; a < n_atoms; ++a) {
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < n_atoms; ++b) {
          if (used[b]) continue;
          const double d = norm2(p[b] - ref[a]);
          if (d < bd) {
            bd = d;
            perm[a] = b;
          }
        }
        used[perm[a]] = true;
      }
      std::vector<Vec2> qq(n_atoms), pp(n_atoms);
      for (std::size_t a = 0; a < n_atoms; ++a) {
        qq[a] = q[perm[a]];
        pp[a] = p[perm[a]];
      }
      q.swap(qq);
      p.swap(pp);
    }
    p_est.push_back(p);
    rep.slices.push_back({lambda, src.t, std::move(r.field), std::move(fit), q});
  }

  rep.p.assign(n_atoms, Vec2{});
  for (const auto& p : p_est)
    for (std::size_t j = 0; j < n_atoms; ++j) rep.p[j] += p[j];
  for (auto& p : rep.p) p = (1.0 / static_cast<double>(p_est.size())) * p;
  for (const auto& s : rep.slices) {
    const double root = std::sqrt(-s.t);
    for (std::size_t j = 0; j < n_atoms; ++j)
      rep.fit_error =
          std::max(rep.fit_error, norm(s.q[j] - center - root * rep.p[j]) / root);
  }
  return rep;
}

}  // namespace kslab::rescale
