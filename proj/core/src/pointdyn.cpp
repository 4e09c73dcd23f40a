#include "kslab/pointdyn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/io.hpp"
#include "kslab/ode.hpp"
#include "kslab/potential.hpp"

namespace kslab::pointdyn {

namespace {

void check_pair(std::size_t j, std::size_t k, double d2, double guard) {
  if (!(d2 > 0.0 && d2 >= guard * guard)) {
    std::ostringstream os;
    os << "points " << j << " and " << k << " are " << std::sqrt(d2)
       << " apart (guard " << guard << ")";
    throw CollisionError(os.str(), j, k, 0.0, d2 / 16.0);
  }
}

// 4 ∑_{k≠j} (x_k - x_j)/|x_k - x_j|^2, pairs visited once.
std::vector<Vec2> pair_field(const std::vector<Vec2>& x, double guard) {
  const std::size_t n = x.size();
  std::vector<Vec2> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) {
      const Vec2 d = x[k] - x[j];
      const double d2 = norm2(d);
      check_pair(j, k, d2, guard);
      const Vec2 f = (4.0 / d2) * d;
      out[j] += f;
      out[k] -= f;
    }
  }
  return out;
}

double log_pair_sum(const std::vector<Vec2>& x) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (std::size_t k = j + 1; k < x.size(); ++k) {
      const double d2 = norm2(x[k] - x[j]);
      if (!(d2 > 0.0)) throw CollisionError("coincident points", j, k, 0.0, 0.0);
      s += 0.5 * std::log(d2);
    }
  }
  return s;
}

double sum_sq(const std::vector<Vec2>& x) {
  double s = 0.0;
  for (const auto& p : x) s += norm2(p);
  return s;
}

std::vector<Vec2> unpack(const ode::State& y) {
  std::vector<Vec2> x(y.size() / 2);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = {y[2 * j], y[2 * j + 1]};
  return x;
}

ode::State pack(const std::vector<Vec2>& x) {
  ode::State y(2 * x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    y[2 * j] = x[j].x;
    y[2 * j + 1] = x[j].y;
  }
  return y;
}

std::pair<std::size_t, std::size_t> closest_pair(const std::vector<Vec2>& x, double& d2_out) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < x.size(); ++j)
    for (std::size_t k = j + 1; k < x.size(); ++k) {
      const double d2 = norm2(x[k] - x[j]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = {j, k};
      }
    }
  d2_out = best_d2;
  return best;
}

double max_norm(const std::vector<Vec2>& v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, norm(x));
  return m;
}

}  // namespace

void FlowParams::validate() const {
  if (!(dt_init > 0.0)) throw ArgumentError("FlowParams: dt_init must be positive");
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
    throw ArgumentError("FlowParams: tolerances must be positive");
  if (!(min_separation_guard > 0.0))
    throw ArgumentError("FlowParams: min_separation_guard must be positive");
  if (max_steps == 0) throw ArgumentError("FlowParams: max_steps must be >= 1");
}

std::vector<Vec2> q_rhs(const std::vector<Vec2>& q, double guard) {
  return pair_field(q, guard);
}

std::vector<Vec2> q_rhs(const PointConfiguration& q, double guard) {
  return pair_field(q.points(), guard);
}

std::vector<Vec2> p_rhs(const std::vector<Vec2>& p, double guard) {
  auto v = pair_field(p, guard);
  for (std::size_t j = 0; j < p.size(); ++j) v[j] += 0.5 * p[j];
  return v;
}

std::vector<Vec2> p_rhs(const PointConfiguration& p, double guard) {
  return p_rhs(p.points(), guard);
}

std::vector<Vec2> hybrid_point_rhs(const HybridState& s, const ForcingSpec& forcing,
                                   double guard) {
  if (s.atoms.empty()) return {};
  auto v = pair_field(s.atoms, guard);
  const bool has_rho = total_mass(s.rho) > 0.0;
  for (std::size_t j = 0; j < s.atoms.size(); ++j) {
    if (!s.rho.grid().contains(s.atoms[j]))
      throw ArgumentError("hybrid_point_rhs: atom " + std::to_string(j) + " outside the grid");
    if (has_rho) v[j] += newtonian_gradient_at(s.rho, s.atoms[j]);
    if (forcing.has_drift()) v[j] += forcing.grad_f(s.atoms[j], s.t);
  }
  return v;
}

double W_energy(const std::vector<Vec2>& q) { return 8.0 * log_pair_sum(q); }

double calW_energy(const std::vector<Vec2>& p) {
  return -0.25 * sum_sq(p) + 8.0 * log_pair_sum(p);
}

std::vector<Vec2> calW_gradient(const std::vector<Vec2>& p) {
  auto v = pair_field(p, 0.0);  // 4 ∑ (p_k - p_j)/|.|^2
  for (std::size_t j = 0; j < p.size(); ++j) v[j] = -0.5 * p[j] - 2.0 * v[j];
  return v;
}

double calW_unordered(const std::vector<Vec2>& p) {
  return -0.25 * sum_sq(p) + 4.0 * log_pair_sum(p);
}

std::vector<Vec2> calW_unordered_gradient(const std::vector<Vec2>& p) {
  auto v = pair_field(p, 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) v[j] = -0.5 * p[j] - v[j];
  return v;
}

PointTrajectory integrate(const PointConfiguration& config, double t0, double t_end,
                          const FlowParams& params, const ExternalDrift& drift) {
  params.validate();
  const Frame frame = config.frame();
  const double guard = params.min_separation_guard;
  PointTrajectory tr;
  tr.frame = frame;

  auto record = [&](double t, const std::vector<Vec2>& x) {
    tr.times.push_back(t);
    tr.points.push_back(x);
    tr.W.push_back(W_energy(x));
    tr.calW.push_back(calW_energy(x));
  };
  record(t0, config.points());
  double last_u = frame == Frame::RenormalizedP ? calW_unordered(config.points()) : 0.0;

  const ode::Rhs f = [&](double t, const ode::State& y, ode::State& out) {
    const auto x = unpack(y);
    std::vector<Vec2> v;
    try {
      v = frame == Frame::PhysicalQ ? q_rhs(x, guard) : p_rhs(x, guard);
    } catch (const CollisionError&) {
      return false;
    }
    if (drift)
      for (std::size_t j = 0; j < x.size(); ++j) v[j] += drift(j, x[j], t);
    for (std::size_t j = 0; j < x.size(); ++j) {
      out[2 * j] = v[j].x;
      out[2 * j + 1] = v[j].y;
    }
    return true;
  };
  const ode::StepObserver obs = [&](double t, const ode::State& y) {
    const auto x = unpack(y);
    record(t, x);
    if (frame == Frame::RenormalizedP) {
      const double u = calW_unordered(x);
      // Forward in s the energy must not rise; backward it must not fall.
      const double rise = t_end >= t0 ? u - last_u : last_u - u;
      tr.max_energy_increase = std::max(tr.max_energy_increase, rise);
      last_u = u;
    }
    return true;
  };

  ode::Options opt;
  opt.dt_init = params.dt_init;
  opt.rel_tol = params.rel_tol;
  opt.abs_tol = params.abs_tol;
  opt.max_steps = params.max_steps;
  const auto res = ode::dormand_prince(f, t0, pack(config.points()), t_end, opt, obs);
  tr.accepted = res.accepted;
  tr.rejected = res.rejected;

  if (res.status == ode::Status::StepUnderflow) {
    double d2 = 0.0;
    const auto x = unpack(res.y);
    const auto [j, k] = closest_pair(x, d2);
    tr.collision = CollisionInfo{j, k, res.t, std::sqrt(d2), res.t + d2 / 16.0};
  } else if (res.status == ode::Status::MaxSteps) {
    throw SearchFailure("integrate: step budget exhausted at t=" + io::format_double(res.t),
                        0.0);
  }
  return tr;
}

CriticalPoint find_critical_point(const PointConfiguration& p0, const FlowParams& params,
                                  double tolerance, double max_flow_time) {
  if (p0.frame() != Frame::RenormalizedP)
    throw ArgumentError("find_critical_point: configuration must be in the p frame");
  params.validate();
  const double guard = params.min_separation_guard;
  const std::size_t n = p0.size();

  // Critical points attract the flow in reversed s (ascent on 𝒲).
  std::vector<Vec2> p = p0.points();
  double flow_time = 0.0;
  const double switch_residual = 1e-4;
  {
    const ode::Rhs f = [&](double, const ode::State& y, ode::State& out) {
      std::vector<Vec2> v;
      try {
        v = p_rhs(unpack(y), guard);
      } catch (const CollisionError&) {
        return false;
      }
      for (std::size_t j = 0; j < v.size(); ++j) {
        out[2 * j] = -v[j].x;
        out[2 * j + 1] = -v[j].y;
      }
      return true;
    };
    const ode::StepObserver obs = [&](double t, const ode::State& y) {
      flow_time = t;
      return max_norm(p_rhs(unpack(y), guard)) > switch_residual;
    };
    ode::Options opt;
    opt.dt_init = params.dt_init;
    opt.rel_tol = std::max(params.rel_tol, 1e-10);
    opt.abs_tol = std::max(params.abs_tol, 1e-12);
    opt.max_steps = params.max_steps;
    if (max_norm(p_rhs(p, guard)) > switch_residual) {
      const auto res = ode::dormand_prince(f, 0.0, pack(p), max_flow_time, opt, obs);
      p = unpack(res.y);
      flow_time = res.t;
    }
  }

  // Gauss-Newton on p_rhs = 0, rotation fixed by freezing the angle of the
  // point farthest from the origin.
  int iters = 0;
  double residual = max_norm(p_rhs(p, guard));
  const int m = static_cast<int>(2 * n);
  for (; iters < 50 && residual > tolerance; ++iters) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd F = Eigen::VectorXd::Zero(m + 1);
    const auto v = p_rhs(p, guard);
    for (std::size_t j = 0; j < n; ++j) {
      F(2 * j) = v[j].x;
      F(2 * j + 1) = v[j].y;
      J(2 * j, 2 * j) += 0.5;
      J(2 * j + 1, 2 * j + 1) += 0.5;
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        // d(4 d/|d|^2)/dd with d = p_k - p_j.
        const Vec2 d = p[k] - p[j];
        const double r2 = norm2(d);
        const double r4 = r2 * r2;
        Eigen::Matrix2d D;
        D << (r2 - 2 * d.x * d.x) / r4, -2 * d.x * d.y / r4, -2 * d.x * d.y / r4,
            (r2 - 2 * d.y * d.y) / r4;
        D *= 4.0;
        const int a = static_cast<int>(2 * j), b = static_cast<int>(2 * k);
        // v_j += f(d), v_k -= f(d); ∂d/∂p_k = I, ∂d/∂p_j = -I.
        J.block<2, 2>(a, b) += D;
        J.block<2, 2>(a, a) -= D;
        J.block<2, 2>(b, b) -= D;
        J.block<2, 2>(b, a) += D;
      }
    }
    std::size_t far = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (norm2(p[j]) > norm2(p[far])) far = j;
    J(m, static_cast<int>(2 * far)) = -p[far].y;
    J(m, static_cast<int>(2 * far + 1)) = p[far].x;
    const Eigen::VectorXd delta = J.colPivHouseholderQr().solve(-F);

    double lambda = 1.0;
    std::vector<Vec2> trial(n);
    double trial_res = std::numeric_limits<double>::infinity();
    for (int bt = 0; bt < 30; ++bt, lambda *= 0.5) {
      for (std::size_t j = 0; j < n; ++j)
        trial[j] = p[j] + lambda * Vec2{delta(2 * j), delta(2 * j + 1)};
      try {
        trial_res = max_norm(p_rhs(trial, guard));
      } catch (const CollisionError&) {
        continue;
      }
      if (trial_res < residual) break;
    }
    if (!(trial_res < residual)) break;
    p = trial;
    residual = trial_res;
  }
  if (!(residual <= tolerance)) {
    throw SearchFailure("find_critical_point: residual " + io::format_double(residual) +
                            " above tolerance",
                        residual);
  }
  return {PointConfiguration(p, Frame::RenormalizedP), residual, calW_energy(p), flow_time,
          iters};
}

PointTrajectory to_renormalized(const PointTrajectory& q, double collapse_time) {
  if (q.frame != Frame::PhysicalQ)
    throw ArgumentError("to_renormalized: trajectory must be in the q frame");
  PointTrajectory p;
  p.frame = Frame::RenormalizedP;
  for (std::size_t k = 0; k < q.times.size(); ++k) {
    const double tau = q.times[k] - collapse_time;
    if (!(tau < 0.0)) throw ArgumentError("to_renormalized: sample at or after collapse");
    const double r = std::sqrt(-tau);
    std::vector<Vec2> x(q.points[k].size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (1.0 / r) * q.points[k][j];
    p.times.push_back(-std::log(-tau));
    p.W.push_back(W_energy(x));
    p.calW.push_back(calW_energy(x));
    p.points.push_back(std::move(x));
  }
  return p;
}

MomentumReport momentum_report(const PointTrajectory& q, double collapse_time) {
  if (q.times.empty()) throw ArgumentError("momentum_report: empty trajectory");
  const auto n = static_cast<double>(q.points.front().size());
  MomentumReport r;
  r.derived_slope = -4.0 * n * (n - 1.0);
  r.stated_slope = 2.0 * n * (n - 1.0);
  r.derived_bound = 2.0 * std::sqrt(n * (n - 1.0));
  r.stated_bound = std::sqrt(2.0 * n * (n - 1.0));
  r.separation_ratio = std::numeric_limits<double>::infinity();

  auto center = [](const std::vector<Vec2>& x) {
    Vec2 c;
    for (const auto& p : x) c += p;
    return c;
  };
  r.first_momentum_initial = center(q.points.front());
  const double span = std::abs(q.times.back() - q.times.front());
  const double c_norm = 1.0 / n;

  // Least-squares slope of ∑|q|^2 over t.
  double st = 0, ss = 0, stt = 0, sts = 0;
  for (std::size_t k = 0; k < q.times.size(); ++k) {
    const double t = q.times[k];
    const double s = sum_sq(q.points[k]);
    st += t;
    ss += s;
    stt += t * t;
    sts += t * s;
    r.first_momentum_drift =
        std::max(r.first_momentum_drift, norm(center(q.points[k]) - r.first_momentum_initial));
    if (k > 0) {
      const double dt = t - q.times[k - 1];
      if (std::abs(dt) >= 1e-6 * span) {
        const double slope = (s - sum_sq(q.points[k - 1])) / dt;
        r.max_slope_deviation = std::max(r.max_slope_deviation, std::abs(slope - r.derived_slope));
      }
    }
    const double tau = collapse_time - t;
    if (tau > 1e-8 * std::max(span, 1.0)) {
      const Vec2 c = c_norm * center(q.points[k]);
      double far = 0.0;
      for (const auto& p : q.points[k]) far = std::max(far, norm(p - c));
      r.bound_ratio = std::max(r.bound_ratio, far / std::sqrt(tau));
      if (q.points[k].size() > 1) {
        double d2 = 0.0;
        closest_pair(q.points[k], d2);
        r.separation_ratio = std::min(r.separation_ratio, std::sqrt(d2 / tau));
      }
    }
  }
  const double m = static_cast<double>(q.times.size());
  const double den = m * stt - st * st;
  r.second_momentum_slope = den != 0.0 ? (m * sts - st * ss) / den : 0.0;
  if (!std::isfinite(r.separation_ratio)) r.separation_ratio = 0.0;
  return r;
}

void write_trajectory_csv(std::ostream& os, const PointTrajectory& traj) {
  os << "s_or_t,j,x,y,W,calW\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    for (std::size_t j = 0; j < traj.points[k].size(); ++j) {
      os << io::format_double(traj.times[k]) << ',' << j << ','
         << io::format_double(traj.points[k][j].x) << ','
         << io::format_double(traj.points[k][j].y) << ',' << io::format_double(traj.W[k])
         << ',' << io::format_double(traj.calW[k]) << '\n';
    }
  }
}

void write_trajectory_csv(const std::string& path, const PointTrajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path + " for writing");
  write_trajectory_csv(os, traj);
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace kslab::pointdyn
