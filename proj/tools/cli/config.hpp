#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kslab/hybrid.hpp"
#include "kslab/pde.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/state.hpp"

namespace kslab::cli {

using nlohmann::json;

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses JSON text; syntax errors become ConfigError("name:line:col: ...").
json parse_config_text(const std::string& text, const std::string& name);
json load_config(const std::filesystem::path& path);

/// Resolves config-relative file paths.
struct ConfigContext {
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;

  std::filesystem::path resolve(const std::string& p) const;
};

double get_number(const json& j, const char* key, double fallback);
double require_number(const json& j, const char* key);
Vec2 parse_point(const json& j, const char* what);
std::vector<Vec2> parse_points(const json& j, const char* what);

Grid2D parse_grid(const json& j);
/// gaussian{mass | mass_pi, width, center}, bubble{lambda, center},
/// sum{terms}, snapshot{path}.
DensityField parse_initial(const json& j, const Grid2D& grid, const ConfigContext& ctx);
/// drift{uniform | confine | self_similar}, source{gaussian}, self_attraction.
ForcingSpec parse_forcing(const json& j);
pde::SolverParams parse_solver(const json& j);
ConcentrationThresholds parse_thresholds(const json& j);
pointdyn::FlowParams parse_flow(const json& j);
hybrid::HybridParams parse_hybrid(const json& j);

/// Points from `points`, `points_file`, or `random{n, radius}` drawn with
/// the context seed.
PointConfiguration parse_configuration(const json& j, Frame frame, const ConfigContext& ctx);

/// Deterministic uniform doubles in [0, 1) from a 64-bit seed.
std::vector<double> uniform_stream(std::uint64_t seed, std::size_t count);

}  // namespace kslab::cli
