#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kslab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: bad radii, out-of-domain point, malformed configuration.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a field invariant (non-finite or negative values).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A time step produced NaN or a negative density.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::size_t step, double t)
      : Error(what), step_(step), t_(t) {}
  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return t_; }

 private:
  std::size_t step_;
  double t_;
};

/// Mass reached the edge of the truncated box; the far-field vacuum
/// assumption no longer holds.
class BoundaryMassError : public Error {
 public:
  BoundaryMassError(const std::string& what, double fraction, double t)
      : Error(what), fraction_(fraction), t_(t) {}
  double fraction() const noexcept { return fraction_; }
  double time() const noexcept { return t_; }

 private:
  double fraction_;
  double t_;
};

/// Two points came closer than the collision guard.
class CollisionError : public Error {
 public:
  CollisionError(const std::string& what, std::size_t j, std::size_t k,
                 double t, double collapse_estimate)
      : Error(what), j_(j), k_(k), t_(t), collapse_(collapse_estimate) {}
  std::size_t first() const noexcept { return j_; }
  std::size_t second() const noexcept { return k_; }
  double time() const noexcept { return t_; }
  double collapse_time_estimate() const noexcept { return collapse_; }

 private:
  std::size_t j_, k_;
  double t_;
  double collapse_;
};

class DetectionFailure : public Error {
 public:
  using Error::Error;
};

class SearchFailure : public Error {
 public:
  SearchFailure(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace kslab
