#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace kslab::ode {

using State = std::vector<double>;

/// Writes dy/dt into `out`. Returns false when y is inadmissible (the
/// trial step is then rejected and shrunk).
using Rhs = std::function<bool(double t, const State& y, State& out)>;

/// Called after each accepted step; return false to stop.
using StepObserver = std::function<bool(double t, const State& y)>;

struct Options {
  double dt_init = 1e-3;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double dt_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 1'000'000;
};

enum class Status {
  Reached,      // hit t_end
  Stopped,      // observer asked to stop
  StepUnderflow,  // step fell below roundoff while the rhs kept refusing
  MaxSteps,
};

struct Result {
  double t = 0.0;
  State y;
  Status status = Status::Reached;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Dormand-Prince 5(4) with FSAL and the standard PI-free step controller.
/// Integrates backward when t_end < t0.
inline Result dormand_prince(const Rhs& f, double t0, State y0, double t_end,
                             const Options& opt, const StepObserver& observer = {}) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b* (difference between the 5th and embedded 4th order weights).
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  const std::size_t n = y0.size();
  const double dir = t_end >= t0 ? 1.0 : -1.0;
  Result res;
  res.t = t0;
  res.y = std::move(y0);
  if (t_end == t0) return res;

  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
  if (!f(res.t, res.y, k1)) {
    res.status = Status::StepUnderflow;
    return res;
  }
  double h = std::min(std::abs(opt.dt_init), opt.dt_max);
  auto stage = [&](double t, State& out) { return f(t, tmp, out); };

  while (true) {
    const double remaining = std::abs(t_end - res.t);
    if (remaining <= 4.0 * std::numeric_limits<double>::epsilon() *
                          std::max(1.0, std::abs(t_end))) {
      res.status = Status::Reached;
      return res;
    }
    if (res.accepted >= opt.max_steps) {
      res.status = Status::MaxSteps;
      return res;
    }
    const double floor = 16.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(res.t));
    if (h < floor) {
      res.status = Status::StepUnderflow;
      return res;
    }
    const bool last = h >= remaining;
    const double hs = dir * (last ? remaining : h);
    const double t = res.t;
    const State& y = res.y;

    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * a21 * k1[i];
    ok = ok && stage(t + c2 * hs, k2);
    if (ok) {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
      ok = stage(t + c3 * hs, k3);
    }
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      ok = stage(t + c4 * hs, k4);
    }
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      ok = stage(t + c5 * hs, k5);
    }
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                              a65 * k5[i]);
      ok = stage(t + hs, k6);
    }
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                               b6 * k6[i]);
      const double t_new = last ? t_end : t + hs;
      ok = f(t_new, ynew, k7);
    }
    if (!ok) {
      h *= 0.25;
      ++res.rejected;
      continue;
    }

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                             e6 * k6[i] + e7 * k7[i]);
      const double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (e / sc) * (e / sc);
    }
    err = n ? std::sqrt(err / static_cast<double>(n)) : 0.0;

    if (err <= 1.0) {
      res.t = last ? t_end : t + hs;
      res.y.swap(ynew);
      k1.swap(k7);
      ++res.accepted;
      if (observer && !observer(res.t, res.y)) {
        res.status = Status::Stopped;
        return res;
      }
      const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      h = std::min(opt.dt_max, std::abs(hs) * std::clamp(fac, 0.2, 5.0));
    } else {
      ++res.rejected;
      h = std::abs(hs) * std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
    }
  }
}

}  // namespace kslab::ode
