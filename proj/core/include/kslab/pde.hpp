#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "kslab/diagnostics.hpp"
#include "kslab/grid.hpp"
#include "kslab/io.hpp"
#include "kslab/state.hpp"

namespace kslab::pde {

enum class DiffusionMode { Explicit, SemiImplicit };

struct SolverParams {
  double dt_max = 1e-2;
  /// Fraction of the positivity-limited step actually taken, in (0, 1).
  double cfl = 0.4;
  DiffusionMode diffusion = DiffusionMode::Explicit;
  double end_time = 1.0;
  std::size_t snapshot_every = 10;
  /// Concentration check cadence in steps.
  std::size_t detect_every = 1;
  /// Abort when the outer cell ring holds more than this fraction of mass.
  double boundary_mass_limit = 1e-6;
  std::size_t max_steps = 50'000'000;
  bool keep_snapshots = true;
  bool stop_on_concentration = true;

  /// Throws ArgumentError unless dt_max > 0 and 0 < cfl < 1.
  void validate() const;
};

/// Cell-centered advection velocity for a density at time t.
using VelocityFn = std::function<VectorField(const DensityField&, double)>;

/// ∇v[u] + ∇f(·, t) at the cell centers (∇v omitted when the forcing
/// disables self-attraction).
VectorField keller_segel_velocity(const DensityField& u, const ForcingSpec& forcing,
                                  double t);

/// Conservative finite-volume rate Δ_h u - div_h(u a) with MUSCL-minmod
/// upwind advective fluxes and zero flux through the outer boundary.
/// `with_diffusion = false` drops the Laplacian.
ScalarField transport_rate(const DensityField& u, const VectorField& velocity,
                           bool with_diffusion = true);

/// Largest forward-Euler step that keeps transport_rate positivity
/// preserving: 1 / (4/h^2 + 1.5 S/h) with S the largest sum of face speeds
/// around a cell (the 4/h^2 term is dropped for implicit diffusion).
double positivity_dt(const VectorField& velocity, bool explicit_diffusion = true);

/// u_t for u_t = Δu - div(u ∇(v + f)) + g.
/// Throws ArgumentError when the forcing cannot be evaluated at t.
ScalarField rhs(const DensityField& u, const ForcingSpec& forcing, double t);

struct StepResult {
  DensityField u;
  double dt = 0.0;
};

/// One SSP-RK2 step with dt = min(dt_max, cap, cfl * positivity_dt).
/// Throws NumericalFailure (carrying step_index) on NaN or negative output.
StepResult step(const DensityField& u, const ForcingSpec& forcing, double t,
                const SolverParams& params, std::size_t step_index = 0,
                std::optional<double> dt_cap = std::nullopt);

/// Same as step() with a caller-supplied velocity; the forcing contributes
/// only its source g.
StepResult step_with_velocity(const DensityField& u, const VelocityFn& velocity,
                              const ForcingSpec& forcing, double t,
                              const SolverParams& params, std::size_t step_index = 0,
                              std::optional<double> dt_cap = std::nullopt);

/// Axis-split backward Euler (I - dt Dxx)(I - dt Dyy) w = rhs with the
/// cell-centered Neumann second differences. Preserves the sum and maps
/// nonnegative input to nonnegative output.
ScalarField implicit_diffusion(const ScalarField& rhs, double dt);

enum class StopReason { EndTime, Concentration, MaxSteps };

const char* stop_reason_name(StopReason r) noexcept;

struct Trajectory {
  std::vector<io::Snapshot> snapshots;
  std::vector<DiagnosticsRecord> records;
  StopReason stop = StopReason::EndTime;
  std::size_t steps = 0;
  double t_final = 0.0;
  std::optional<DensityField> final_state;
  /// Record at the step where the verdict fired, if it did.
  std::optional<DiagnosticsRecord> detection;
};

/// Called with each cadence record and the density it describes.
using Observer = std::function<void(const DiagnosticsRecord&, const DensityField&)>;

/// Repeated steps from (u0, t0) to t0 + end_time. Halts early on the
/// concentration verdict (checked every detect_every steps). Snapshots and
/// records are taken at t0, every snapshot_every steps, and at the stop.
/// Throws BoundaryMassError when mass reaches the box edge; NumericalFailure
/// propagates from step().
Trajectory evolve(const DensityField& u0, const ForcingSpec& forcing,
                  const SolverParams& params, const ConcentrationThresholds& th = {},
                  const Observer& observer = {}, double t0 = 0.0);

/// Drift y/2 of the similarity-variable equation, as a forcing.
ForcingSpec self_similar_forcing();

/// z_s for z_s - Δz = -div(z (∇w + y/2)), -Δw = z.
ScalarField self_similar_rhs(const SelfSimilarState& state);

}  // namespace kslab::pde
