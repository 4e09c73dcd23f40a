#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "kslab/grid.hpp"

namespace kslab {

/// Aperiodic (free-space) discrete convolution of n x n arrays through a
/// zero-padded 2n x 2n real FFT.
///
/// convolve() computes out(i, j) = sum_{i', j'} k(i - i', j - j') u(i', j')
/// with no periodic images. Instances own their FFTW plans and buffers and
/// are not shareable across threads; use convolver_for() to get the calling
/// thread's cached instance.
class FreeSpaceConvolver {
 public:
  using Spectrum = std::vector<std::complex<double>>;

  explicit FreeSpaceConvolver(int n);
  ~FreeSpaceConvolver();
  FreeSpaceConvolver(const FreeSpaceConvolver&) = delete;
  FreeSpaceConvolver& operator=(const FreeSpaceConvolver&) = delete;

  int n() const noexcept { return n_; }

  /// Transform of the kernel sampled at integer offsets (di, dj), |di|, |dj| < n.
  Spectrum kernel_spectrum(const std::function<double(int, int)>& kernel);

  void convolve(std::span<const double> u, const Spectrum& kernel,
                std::span<double> out);
  /// Two kernels against the same input, sharing the forward transform.
  void convolve2(std::span<const double> u, const Spectrum& ka,
                 const Spectrum& kb, std::span<double> out_a,
                 std::span<double> out_b);

  /// Cached spectra of the unit-spacing kernels used across the library.
  const Spectrum& newtonian_x();
  const Spectrum& newtonian_y();
  const Spectrum& log_kernel();

 private:
  struct Impl;
  int n_;
  std::unique_ptr<Impl> impl_;
};

/// Per-thread cached convolver for grids with n cells per axis.
FreeSpaceConvolver& convolver_for(int n);

/// Mean of log|z| over the unit square centered at the origin:
/// (log(1/2) - 3 + π/2) / 2.
double log_self_cell_mean() noexcept;

/// ∇v = -(1/2π) ∫ (x - y)/|x - y|^2 u(y) dy at every cell center, via the
/// free-space FFT convolution. The self-cell term is zero.
/// Throws DataError on non-finite input.
VectorField newtonian_gradient(const ScalarField& u);
VectorField newtonian_gradient(const DensityField& u);

/// Same sum by direct O(n^4) evaluation; reference path for small grids.
VectorField newtonian_gradient_direct(const ScalarField& u);

/// Quadrature of the kernel integral at an arbitrary point x in the domain.
/// Cells near x are subdivided 8 x 8 with u held constant per cell; the
/// singular sub-sample (distance below 1e-9 h) is skipped, which is the
/// principal value for the odd kernel.
/// Throws ArgumentError when x lies outside the grid square.
Vec2 newtonian_gradient_at(const DensityField& u, const Vec2& x);

}  // namespace kslab
