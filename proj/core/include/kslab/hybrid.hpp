#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "kslab/diagnostics.hpp"
#include "kslab/pde.hpp"
#include "kslab/state.hpp"

namespace kslab::hybrid {

struct HybridParams {
  pde::SolverParams solver;
  /// Mollification radius of the atom field in cells.
  double mollify_cells = 3.0;
  /// Atom pair distance below which the run stops.
  double min_separation_guard = 1e-6;
  /// An atom may move at most this fraction of the closest pair distance
  /// per step.
  double atom_step_fraction = 0.05;

  void validate() const;
  double mollify_radius(const Grid2D& g) const noexcept { return mollify_cells * g.h(); }
};

/// -4 ∑_j (x - q_j)/(|x - q_j|^2 + r^2) at the cell centers: the atoms'
/// attraction, mollified within r.
VectorField atom_field(const Grid2D& grid, const std::vector<Vec2>& atoms, double r);

/// Advection velocity of ρ: atom_field + ∇v[ρ] + ∇f.
/// Throws ArgumentError when an atom is within r of the boundary.
VectorField rho_velocity(const HybridState& s, const ForcingSpec& forcing, double r);

/// ρ_t for the density part of the hybrid system.
ScalarField rho_rhs(const HybridState& s, const ForcingSpec& forcing,
                    const HybridParams& params = {});

struct HybridStepResult {
  HybridState state;
  double dt = 0.0;
};

/// Strang step: atoms dt/2 (RK4, ρ frozen), ρ dt, atoms dt/2. The shared dt
/// respects the ρ positivity bound and the atom-separation guard. With no
/// atoms this is exactly pde::step.
/// Throws CollisionError when two atoms come within the guard.
HybridStepResult hybrid_step(const HybridState& s, const ForcingSpec& forcing,
                             const HybridParams& params, std::size_t step_index = 0,
                             std::optional<double> dt_cap = std::nullopt);

/// Mass of ρ within distance r of each atom.
std::vector<double> rho_mass_near_atoms(const HybridState& s, double r);

enum class HybridStop { EndTime, Collision, AbsorbedMass, MaxSteps };

const char* hybrid_stop_name(HybridStop s) noexcept;

struct HybridTrajectory {
  std::vector<HybridState> states;
  std::vector<DiagnosticsRecord> records;  // diagnostics of ρ
  HybridStop stop = HybridStop::EndTime;
  std::size_t steps = 0;
  std::optional<std::pair<std::size_t, std::size_t>> colliding_pair;
};

using HybridObserver = std::function<void(const HybridState&, const DiagnosticsRecord&)>;

/// Repeated hybrid_step to t0 + end_time, keeping a state every
/// snapshot_every steps. Stops when ρ near an atom exceeds eps_star (the
/// run no longer represents a fixed atom count) or atoms collide.
HybridTrajectory hybrid_evolve(const HybridState& s0, const ForcingSpec& forcing,
                               const HybridParams& params,
                               const ConcentrationThresholds& th = {},
                               const HybridObserver& observer = {});

}  // namespace kslab::hybrid
