#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kslab/geometry.hpp"
#include "kslab/state.hpp"

namespace kslab::pointdyn {

struct FlowParams {
  double dt_init = 1e-3;
  double rel_tol = 1e-12;
  double abs_tol = 1e-13;
  /// Pair distance below which the rhs refuses to evaluate.
  double min_separation_guard = 1e-6;
  std::size_t max_steps = 2'000'000;

  void validate() const;
};

/// q_j' = 4 ∑_{k≠j} (q_k - q_j)/|q_k - q_j|^2.
/// Throws CollisionError when a pair is closer than `guard`.
std::vector<Vec2> q_rhs(const std::vector<Vec2>& q, double guard = 1e-6);
std::vector<Vec2> q_rhs(const PointConfiguration& q, double guard = 1e-6);

/// p_j' = p_j/2 + 4 ∑_{k≠j} (p_k - p_j)/|p_k - p_j|^2.
std::vector<Vec2> p_rhs(const std::vector<Vec2>& p, double guard = 1e-6);
std::vector<Vec2> p_rhs(const PointConfiguration& p, double guard = 1e-6);

/// Atom velocities of the hybrid system: q_rhs plus the pull of ρ,
/// (1/2π) ∫ (y - q_j)/|y - q_j|^2 ρ(y) dy, plus ∇f(q_j, t).
/// Throws ArgumentError when an atom lies outside the grid.
std::vector<Vec2> hybrid_point_rhs(const HybridState& s, const ForcingSpec& forcing = {},
                                   double guard = 1e-6);

/// 4 ∑_{j≠k} log|q_j - q_k| (ordered pairs).
double W_energy(const std::vector<Vec2>& q);
/// -1/4 ∑ |p_j|^2 + 4 ∑_{j≠k} log|p_j - p_k| (ordered pairs).
double calW_energy(const std::vector<Vec2>& p);
/// Exact gradient of calW_energy: -p_j/2 + 8 ∑_{k≠j} (p_j - p_k)/|p_j - p_k|^2.
std::vector<Vec2> calW_gradient(const std::vector<Vec2>& p);
/// -1/4 ∑ |p_j|^2 + 4 ∑_{j<k} log|p_j - p_k|; p_rhs is minus its gradient.
double calW_unordered(const std::vector<Vec2>& p);
std::vector<Vec2> calW_unordered_gradient(const std::vector<Vec2>& p);

struct CollisionInfo {
  std::size_t j = 0, k = 0;
  double t = 0.0;
  double separation = 0.0;
  /// t + d^2/16: exact for an isolated pair under the q-flow.
  double collapse_estimate = 0.0;
};

struct PointTrajectory {
  Frame frame = Frame::PhysicalQ;
  std::vector<double> times;
  std::vector<std::vector<Vec2>> points;
  std::vector<double> W;
  std::vector<double> calW;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  /// Largest step-to-step increase of calW_unordered (p-frame only; the
  /// forward p-flow never increases it).
  double max_energy_increase = 0.0;
  std::optional<CollisionInfo> collision;

  const std::vector<Vec2>& final_points() const { return points.back(); }
};

/// Extra per-point drift added to the pairwise field (e.g. ∇f or a
/// density's pull).
using ExternalDrift = std::function<Vec2(std::size_t j, const Vec2& x, double t)>;

/// Adaptive Dormand-Prince integration from t0 to t_end (backward if
/// t_end < t0). A q-frame run that approaches a collision stops there and
/// fills `collision` instead of throwing. Records every accepted step.
PointTrajectory integrate(const PointConfiguration& config, double t0, double t_end,
                          const FlowParams& params, const ExternalDrift& drift = {});

struct CriticalPoint {
  PointConfiguration config;
  double residual = 0.0;  // max |p_rhs|
  double energy = 0.0;    // calW_energy
  double flow_time = 0.0;
  int newton_iterations = 0;
};

/// Critical point of 𝒲 reached by the p-flow run toward its attractor,
/// then polished by Gauss-Newton on p_rhs = 0 with the rotation fixed.
/// Throws SearchFailure with the last residual on non-convergence.
CriticalPoint find_critical_point(const PointConfiguration& p0, const FlowParams& params,
                                  double tolerance = 1e-13, double max_flow_time = 400.0);

/// Physical to renormalized frame: p = q/√(-t), s = -log(-t). Requires t < 0
/// for every sample.
PointTrajectory to_renormalized(const PointTrajectory& q_traj, double collapse_time = 0.0);

struct MomentumReport {
  Vec2 first_momentum_initial;
  double first_momentum_drift = 0.0;
  /// Least-squares slope of ∑|q_j|^2 against t over the samples.
  double second_momentum_slope = 0.0;
  double derived_slope = 0.0;   // -4N(N-1)
  double stated_slope = 0.0;    // 2N(N-1), as written in the source lemma
  double max_slope_deviation = 0.0;  // max |Δ∑|q|^2/Δt - derived| over steps
  /// max_j |q_j - c| / √(T - t) over samples, against both constants.
  double bound_ratio = 0.0;
  double derived_bound = 0.0;  // 2√(N(N-1))
  double stated_bound = 0.0;   // √(2N(N-1))
  /// min_{j≠k} |q_j - q_k| / √(T - t): a c_* estimate.
  double separation_ratio = 0.0;
};

/// Momentum identities along a q trajectory that collapses at T.
MomentumReport momentum_report(const PointTrajectory& q_traj, double collapse_time);

/// CSV with header `s_or_t,j,x,y,W,calW`, one row per point per sample.
void write_trajectory_csv(std::ostream& os, const PointTrajectory& traj);
void write_trajectory_csv(const std::string& path, const PointTrajectory& traj);

}  // namespace kslab::pointdyn
