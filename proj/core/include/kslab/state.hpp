#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "kslab/geometry.hpp"
#include "kslab/grid.hpp"

namespace kslab {

/// External drift grad f(x, t) and source g(x, t) of the generalized
/// equation u_t = Δu - div(u ∇(v + f)) + g. Empty functions mean zero.
struct ForcingSpec {
  std::function<Vec2(Vec2, double)> grad_f;
  std::function<double(Vec2, double)> g;
  /// When false, the Newtonian drift ∇v is dropped and only ∇f advects.
  bool self_attraction = true;

  bool has_drift() const noexcept { return static_cast<bool>(grad_f); }
  bool has_source() const noexcept { return static_cast<bool>(g); }
};

enum class Frame { PhysicalQ, RenormalizedP };

std::string_view frame_tag(Frame f) noexcept;
/// Accepts "q" / "p" and the long forms "physical-q" / "renormalized-p".
Frame parse_frame(std::string_view tag);

/// N >= 1 ordered, pairwise distinct points in one frame.
class PointConfiguration {
 public:
  /// Throws ArgumentError on an empty list or coincident points.
  PointConfiguration(std::vector<Vec2> points, Frame frame);

  const std::vector<Vec2>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  Frame frame() const noexcept { return frame_; }
  const Vec2& operator[](std::size_t j) const noexcept { return points_[j]; }

  double min_separation() const noexcept;

 private:
  std::vector<Vec2> points_;
  Frame frame_;
};

/// Atoms of mass 8π riding on a diffuse density.
struct HybridState {
  std::vector<Vec2> atoms;
  DensityField rho;
  double t = 0.0;

  /// Throws ArgumentError if an atom lies outside the open grid square or
  /// two atoms coincide.
  void validate() const;
};

/// Thresholds of the small-local-mass criterion.
struct ConcentrationThresholds {
  double eps_star = 2.0 * kPi;
  double theta_star = 0.25;
  /// Disk radius for local mass; unset means 8 h of the field's grid.
  std::optional<double> detect_radius;
  /// Verdict fires when local mass reaches this fraction of 8π.
  double verdict_fraction = 0.8;
  /// Optional second trigger on d(h^2 max u)/dt; zero disables it.
  double max_density_slope = 0.0;
  /// detect_atoms calls a state diffuse when this much mass is unclaimed.
  double residual_verdict_fraction = 0.25;

  double radius_for(const Grid2D& grid) const noexcept {
    return detect_radius ? *detect_radius : 8.0 * grid.h();
  }
  /// Throws ArgumentError unless eps_star > 0 and 0 < theta_star < 1.
  void validate() const;
};

/// Density z(y, s) in similarity variables.
struct SelfSimilarState {
  DensityField z;
  double s = 0.0;
};

}  // namespace kslab
