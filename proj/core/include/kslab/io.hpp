#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "kslab/grid.hpp"
#include "kslab/state.hpp"

namespace kslab::io {

/// A density with the time it was taken at.
struct Snapshot {
  DensityField field;
  double t = 0.0;
};

// Snapshot container layout, little-endian:
//   "KSF1" | u32 n | f64 L | f64 t | n*n f64 values (row-major, row = y index)
void write_snapshot(std::ostream& out, const DensityField& u, double t);
void write_snapshot(const std::filesystem::path& path, const DensityField& u,
                    double t);
/// Throws DataError on a bad magic, truncated payload or invalid values.
Snapshot read_snapshot(std::istream& in);
Snapshot read_snapshot(const std::filesystem::path& path);

// Point CSV: header "j,x,y,frame", one row per point, %.17g values.
void write_points(std::ostream& out, const PointConfiguration& config);
void write_points(const std::filesystem::path& path,
                  const PointConfiguration& config);
PointConfiguration read_points(std::istream& in);
PointConfiguration read_points(const std::filesystem::path& path);

/// Shortest decimal text that round-trips a double.
std::string format_double(double v);

}  // namespace kslab::io
