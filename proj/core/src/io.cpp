#include "kslab/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "kslab/errors.hpp"

namespace kslab::io {

namespace {

constexpr std::array<char, 4> kMagic{'K', 'S', 'F', '1'};

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw DataError("snapshot: truncated stream");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw DataError("points: bad number '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void write_snapshot(std::ostream& out, const DensityField& u, double t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.grid().n()));
  put_le<double>(out, u.grid().half_width());
  put_le<double>(out, t);
  for (double v : u.values()) put_le<double>(out, v);
  if (!out) throw Error("snapshot: write failed");
}

void write_snapshot(const std::filesystem::path& path, const DensityField& u,
                    double t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_snapshot(out, u, t);
}

Snapshot read_snapshot(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("snapshot: bad magic (expected KSF1)");
  }
  const auto n = get_le<std::uint32_t>(in);
  const double L = get_le<double>(in);
  const double t = get_le<double>(in);
  if (n > 1u << 15) throw DataError("snapshot: implausible n");
  Grid2D grid(L, static_cast<int>(n));
  std::vector<double> values(grid.size());
  for (double& v : values) v = get_le<double>(in);
  return Snapshot{DensityField(grid, std::move(values)), t};
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_snapshot(in);
}

void write_points(std::ostream& out, const PointConfiguration& config) {
  out << "j,x,y,frame\n";
  for (std::size_t j = 0; j < config.size(); ++j) {
    out << j << ',' << format_double(config[j].x) << ','
        << format_double(config[j].y) << ',' << frame_tag(config.frame()) << '\n';
  }
}

void write_points(const std::filesystem::path& path,
                  const PointConfiguration& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_points(out, config);
}

PointConfiguration read_points(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "j,x,y,frame") {
    throw DataError("points: missing header j,x,y,frame");
  }
  std::vector<Vec2> pts;
  std::optional<Frame> frame;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string j, x, y, f;
    if (!std::getline(row, j, ',') || !std::getline(row, x, ',') ||
        !std::getline(row, y, ',') || !std::getline(row, f)) {
      throw DataError("points: malformed row '" + line + "'");
    }
    const Frame fr = parse_frame(f);
    if (frame && *frame != fr) throw DataError("points: mixed frames");
    frame = fr;
    pts.push_back({parse_double(x), parse_double(y)});
  }
  if (!frame) throw DataError("points: no rows");
  return PointConfiguration(std::move(pts), *frame);
}

PointConfiguration read_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_points(in);
}

}  // namespace kslab::io
