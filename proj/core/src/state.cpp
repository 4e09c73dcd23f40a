#include "kslab/state.hpp"

#include <limits>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

std::string_view frame_tag(Frame f) noexcept {
  return f == Frame::PhysicalQ ? "q" : "p";
}

Frame parse_frame(std::string_view tag) {
  if (tag == "q" || tag == "physical-q") return Frame::PhysicalQ;
  if (tag == "p" || tag == "renormalized-p") return Frame::RenormalizedP;
  throw ArgumentError("unknown frame tag '" + std::string(tag) + "'");
}

PointConfiguration::PointConfiguration(std::vector<Vec2> points, Frame frame)
    : points_(std::move(points)), frame_(frame) {
  if (points_.empty()) throw ArgumentError("PointConfiguration: no points");
  for (std::size_t j = 0; j < points_.size(); ++j) {
    for (std::size_t k = j + 1; k < points_.size(); ++k) {
      if (points_[j] == points_[k]) {
        std::ostringstream os;
        os << "PointConfiguration: points " << j << " and " << k << " coincide";
        throw ArgumentError(os.str());
      }
    }
  }
}

double PointConfiguration::min_separation() const noexcept {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < points_.size(); ++j)
    for (std::size_t k = j + 1; k < points_.size(); ++k)
      d = std::min(d, norm(points_[j] - points_[k]));
  return d;
}

void HybridState::validate() const {
  const auto& g = rho.grid();
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    if (!g.contains_strictly(atoms[j])) {
      throw ArgumentError("HybridState: atom " + std::to_string(j) +
                          " lies outside the grid domain");
    }
    for (std::size_t k = j + 1; k < atoms.size(); ++k) {
      if (atoms[j] == atoms[k]) throw ArgumentError("HybridState: coincident atoms");
    }
  }
}

void ConcentrationThresholds::validate() const {
  if (!(eps_star > 0.0)) throw ArgumentError("eps_star must be positive");
  if (!(theta_star > 0.0 && theta_star < 1.0)) {
    throw ArgumentError("theta_star must lie in (0, 1)");
  }
  if (detect_radius && !(*detect_radius > 0.0)) {
    throw ArgumentError("detect_radius must be positive");
  }
}

}  // namespace kslab
