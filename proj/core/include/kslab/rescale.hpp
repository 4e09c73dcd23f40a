#pragma once

#include <optional>
#include <vector>

#include "kslab/diagnostics.hpp"
#include "kslab/grid.hpp"
#include "kslab/io.hpp"
#include "kslab/state.hpp"

namespace kslab::rescale {

/// Bilinear interpolation between cell centers; the field is taken as zero
/// (vacuum) beyond the outer centers and outside the domain.
double sample_bilinear(const DensityField& u, const Vec2& x);

struct Rescaled {
  DensityField field;
  /// Time coordinate of the rescaled solution: t / λ^2.
  double t = 0.0;
  /// True when part of the requested window lay outside the source domain.
  bool partial = false;
};

struct RescaleOptions {
  /// Output grid; defaults to the source grid.
  std::optional<Grid2D> target;
  /// Accept windows that leave the source domain (vacuum fill) instead of
  /// throwing.
  bool allow_partial = false;
};

/// u^λ(x) = λ^2 u(center + λ x), sampled on the target grid.
/// Throws ArgumentError unless λ > 0, or when the window center + λ·[-L', L']^2
/// leaves the source square and partial windows are not allowed.
Rescaled parabolic_rescale(const DensityField& u, double t, double lambda,
                           const Vec2& center = {}, const RescaleOptions& opts = {});

/// z(y) = |t| u(√(-t) y), s = -log(-t). The default target grid has
/// half-width L/√(-t), whose centers map exactly onto the source centers.
/// Throws ArgumentError unless t < 0.
SelfSimilarState to_self_similar(const DensityField& u, double t,
                                 std::optional<Grid2D> target = std::nullopt);

/// Inverse map: t = -e^{-s}, u(x) = z(x/√(-t))/|t|. The default target grid
/// has half-width L·√(-t).
io::Snapshot from_self_similar(const SelfSimilarState& z,
                               std::optional<Grid2D> target = std::nullopt);

struct BlowupWindow {
  /// Rescaled slices ũ(x, τ) = R^{-2} u(x_i + x/R, t_i + τ/R^2), τ = R^2 (t - t_i).
  std::vector<io::Snapshot> slices;
  double R = 1.0;
  Vec2 center;
  double t_center = 0.0;
  /// R^{-2} u(x_i, t_i): 1 up to roundoff.
  double center_value = 0.0;
  std::size_t center_index = 0;
  bool partial = false;
};

/// Max-point rescaling about (x_i, t_i) with R = u(x_i, t_i)^{1/2}, applied to
/// every slice of the trajectory on a grid of half-width `window`.
/// Throws ArgumentError when u(x_i, t_i) = 0 or no slice sits at t_i.
BlowupWindow blowup_rescale(const std::vector<io::Snapshot>& traj, const Vec2& x_i,
                            double t_i, double window = 8.0, int n = 0);

struct BlowDownSlice {
  double lambda = 0.0;
  double t = 0.0;            // time of the source slice
  DensityField field;        // λ^2 u(λ x, t)
  AtomFit fit;               // atoms in the rescaled frame
  std::vector<Vec2> q;       // atoms in physical coordinates
};

struct BlowDownReport {
  std::vector<BlowDownSlice> slices;
  /// Best-fit renormalized positions p_j (mean of q_j/√(-t) over slices).
  std::vector<Vec2> p;
  /// max_{slice, j} |q_j(t) - √(-t) p_j| / √(-t).
  double fit_error = 0.0;
};

/// Blow-down about (center, T = 0): for each λ takes the slice nearest
/// t = -λ^2 (times measured relative to the collapse), rescales by λ and
/// fits `n_atoms` atoms. Atoms are matched across slices to the first
/// slice's ordering by nearest neighbour.
/// Throws ArgumentError for an empty or non-increasing λ list or slices
/// with t >= 0; DetectionFailure propagates.
BlowDownReport blow_down(const std::vector<io::Snapshot>& traj,
                         const std::vector<double>& lambdas, std::size_t n_atoms,
                         const ConcentrationThresholds& th = {}, const Vec2& center = {});

}  // namespace kslab::rescale
