#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kslab/geometry.hpp"

namespace kslab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunOptions {
  /// simulate | pointdyn | critical | hybrid | rescale | diagnose
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;

  // rescale only
  std::optional<double> lambda;
  std::optional<Vec2> center;
  bool self_similar = false;
  std::optional<std::vector<double>> blow_down;
};

/// Runs one scenario (or its sweep) and writes outputs plus manifest.json
/// under opts.out. Returns the process exit code; messages go to `err`,
/// `diagnose` prints its record to `out`.
int run(const RunOptions& opts, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace kslab::cli
