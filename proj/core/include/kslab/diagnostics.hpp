#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kslab/cutoff.hpp"
#include "kslab/grid.hpp"
#include "kslab/state.hpp"

namespace kslab {

/// Scalar functionals of one density snapshot.
struct DiagnosticsRecord {
  double t = 0.0;
  double mass = 0.0;
  Vec2 first_momentum;
  /// ∫ |x|^2 u about the origin.
  double second_momentum = 0.0;
  double free_energy = 0.0;
  double entropy = 0.0;
  double max_density = 0.0;
  double local_mass_sup = 0.0;
  Vec2 local_mass_location;
  bool concentration_flag = false;

  /// One-line JSON object: t, mass, m2, F, entropy, max_u, local_mass_sup,
  /// then m1 and concentration.
  std::string to_ndjson() const;
};

// --- localized moments --------------------------------------------------

/// ∫ u ψ.
double weighted_mass(const DensityField& u, const CutoffFunction& psi);
/// ∫ x u ψ.
Vec2 weighted_first_moment(const DensityField& u, const CutoffFunction& psi);
/// ∫ |x - c|^2 u ψ with c the cutoff center.
double weighted_second_moment(const DensityField& u, const CutoffFunction& psi);

/// Θ_ψ(x, y) = (x - y)/|x - y|^2 · (∇ψ(x) - ∇ψ(y)), taken as 0 when
/// |x - y| < 1e-14.
template <TestFunction T>
double theta_psi(const Vec2& x, const Vec2& y, const T& psi) {
  const Vec2 d = x - y;
  const double r2 = norm2(d);
  if (r2 < 1e-28) return 0.0;
  return dot(d, psi.gradient(x) - psi.gradient(y)) / r2;
}

/// Test function samples at the cell centers of a grid.
struct TestSamples {
  std::vector<double> value;
  std::vector<Vec2> gradient;
  std::vector<double> laplacian;
};

template <TestFunction T>
TestSamples sample_test_function(const Grid2D& grid, const T& psi) {
  TestSamples s;
  s.value.resize(grid.size());
  s.gradient.resize(grid.size());
  s.laplacian.resize(grid.size());
  for (int j = 0; j < grid.n(); ++j) {
    for (int i = 0; i < grid.n(); ++i) {
      const auto k = grid.index(i, j);
      const Vec2 x = grid.center(i, j);
      s.value[k] = psi.value(x);
      s.gradient[k] = psi.gradient(x);
      s.laplacian[k] = psi.laplacian(x);
    }
  }
  return s;
}

/// h^4 ∑∑ Θ_ψ(x, y) u(x) u(y), summed over the pairs where ∇ψ(x) or ∇ψ(y)
/// is nonzero; Θ_ψ vanishes identically on the rest.
double theta_double_sum(const DensityField& u, const TestSamples& psi);

/// Right side of d/dt ∫ uψ = ∫ uΔψ + ∫ u ∇f·∇ψ + ∫ gψ - (1/4π) ∬ Θ_ψ u u.
double symmetrization_rate(const DensityField& u, const TestSamples& psi,
                           const ForcingSpec& forcing, double t);

template <TestFunction T>
double symmetrization_rate(const DensityField& u, const T& psi,
                           const ForcingSpec& forcing = {}, double t = 0.0) {
  return symmetrization_rate(u, sample_test_function(u.grid(), psi), forcing, t);
}

/// 4m - m^2/(2π): the second-momentum rate of a collapsing mass m.
double second_momentum_rate_prediction(double m);

/// A measure made of weighted points plus an optional density.
struct Measure {
  std::vector<std::pair<Vec2, double>> atoms;
  std::optional<DensityField> density;

  static Measure from_hybrid(const HybridState& s);
};

/// The cross-plus-gradient kernel Φ(x, y) of the localized second momentum
/// for cutoff ψ (coordinates relative to ψ's center); 0 on the diagonal.
double phi_kernel(const Vec2& x, const Vec2& y, const CutoffFunction& psi);

/// d/dt ∫ |x|^2 ψ dμ evaluated from the measure:
///   4A - A^2/(2π) + ∫ (|x|^2 Δψ + 4 x·∇ψ) dμ - ∬ Φ dμ dμ,  A = ∫ ψ dμ.
/// Coordinates are measured from ψ's center. The Φ double sum skips pairs
/// lying both in {ψ = 1} or both in {ψ = 0}, where Φ vanishes.
double localized_m2_rate(const Measure& mu, const CutoffFunction& psi);

// --- energies -------------------------------------------------------------

/// h^2 ∑ u log u over cells with u > 0.
double entropy(const DensityField& u);
/// (1/4π) ∬ log|x - y| u(x) u(y); the self-cell uses the exact mean of
/// log over a square cell.
double interaction_energy(const DensityField& u);
/// entropy + interaction_energy.
double free_energy(const DensityField& u);

// --- concentration --------------------------------------------------------

/// Mass in the disk of radius r around every cell center (cells whose
/// centers lie within r). Computed from per-row prefix sums.
ScalarField local_mass_field(const DensityField& u, double r);

struct LocalMass {
  double mass = 0.0;
  Vec2 location;
};

/// Maximum of local_mass_field and its argmax (first in storage order on ties).
/// Throws ArgumentError unless 0 < r < L.
LocalMass local_mass_sup(const DensityField& u, double r);

struct AtomFit {
  PointConfiguration atoms;
  /// Mass farther than the detection radius from every atom.
  double residual_mass = 0.0;
  double residual_fraction = 0.0;
  double objective = 0.0;
  /// False when the residual exceeds the configured verdict fraction.
  bool genuine = false;
  int iterations = 0;
};

struct DetectOptions {
  int max_iterations = 500;
  double step_tolerance = 1e-13;
};

/// Weight ω(x; p): |x - p_j|^2 within the detection radius a of the
/// nearest atom, a quadratic cap rising to 4 a^2 at distance 4 a, then
/// constant. Exposed for tests.
double atom_weight(double distance, double a) noexcept;

/// Minimizes ∫ ω(x; p_1..p_N) u dx from seeds at the N strongest separated
/// local maxima of the local mass field.
/// Throws DetectionFailure when fewer than n_atoms seeds exist or the
/// descent does not settle within the iteration budget.
AtomFit detect_atoms(const DensityField& u, const ConcentrationThresholds& th,
                     std::size_t n_atoms, const DetectOptions& opts = {});

/// Full record at time t. The flag reflects the local-mass trigger only.
DiagnosticsRecord make_record(const DensityField& u, double t,
                              const ConcentrationThresholds& th);

/// Local mass at the detection radius has reached verdict_fraction * 8π, or
/// (when enabled and a previous record is given) h^2 max u grows faster
/// than max_density_slope.
bool concentration_verdict(const DiagnosticsRecord& rec,
                           const ConcentrationThresholds& th, double cell_area,
                           const DiagnosticsRecord* previous = nullptr);

}  // namespace kslab
