#include "kslab/potential.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <optional>

#include "kslab/errors.hpp"
#include "kslab/parallel.hpp"

namespace kslab {

namespace {

// FFTW's planner is not thread-safe; executing distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwDeleter {
  void operator()(T* p) const noexcept { fftw_free(p); }
};

void check_finite(std::span<const double> v, const char* who) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError(std::string(who) + ": non-finite input value");
  }
}

}  // namespace

struct FreeSpaceConvolver::Impl {
  int n;
  int big;  // padded size 2n
  std::size_t real_size;
  std::size_t spec_size;
  std::unique_ptr<double, FftwDeleter<double>> real;
  std::unique_ptr<fftw_complex, FftwDeleter<fftw_complex>> spec;
  std::unique_ptr<fftw_complex, FftwDeleter<fftw_complex>> work;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::optional<Spectrum> nx, ny, lg;

  explicit Impl(int n_)
      : n(n_),
        big(2 * n_),
        real_size(static_cast<std::size_t>(big) * big),
        spec_size(static_cast<std::size_t>(big) * (big / 2 + 1)) {
    real.reset(static_cast<double*>(fftw_malloc(sizeof(double) * real_size)));
    spec.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_size)));
    work.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_size)));
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_dft_r2c_2d(big, big, real.get(), spec.get(), FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_2d(big, big, work.get(), real.get(), FFTW_ESTIMATE);
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }

  void load(std::span<const double> u) {
    std::fill(real.get(), real.get() + real_size, 0.0);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        real.get()[static_cast<std::size_t>(j) * big + i] =
            u[static_cast<std::size_t>(j) * n + i];
  }

  void multiply_and_invert(const Spectrum& k, std::span<double> out) {
    const double scale = 1.0 / static_cast<double>(real_size);
    for (std::size_t q = 0; q < spec_size; ++q) {
      const std::complex<double> a(spec.get()[q][0], spec.get()[q][1]);
      const std::complex<double> p = a * k[q];
      work.get()[q][0] = p.real();
      work.get()[q][1] = p.imag();
    }
    fftw_execute_dft_c2r(backward, work.get(), real.get());
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(j) * n + i] =
            real.get()[static_cast<std::size_t>(j) * big + i] * scale;
  }
};

FreeSpaceConvolver::FreeSpaceConvolver(int n) : n_(n), impl_(std::make_unique<Impl>(n)) {}
FreeSpaceConvolver::~FreeSpaceConvolver() = default;

FreeSpaceConvolver::Spectrum FreeSpaceConvolver::kernel_spectrum(
    const std::function<double(int, int)>& kernel) {
  auto& m = *impl_;
  const int big = m.big;
  std::fill(m.real.get(), m.real.get() + m.real_size, 0.0);
  for (int dj = -(n_ - 1); dj <= n_ - 1; ++dj) {
    const int r = (dj + big) % big;
    for (int di = -(n_ - 1); di <= n_ - 1; ++di) {
      const int c = (di + big) % big;
      m.real.get()[static_cast<std::size_t>(r) * big + c] = kernel(di, dj);
    }
  }
  fftw_execute_dft_r2c(m.forward, m.real.get(), m.spec.get());
  Spectrum s(m.spec_size);
  for (std::size_t q = 0; q < m.spec_size; ++q) s[q] = {m.spec.get()[q][0], m.spec.get()[q][1]};
  return s;
}

void FreeSpaceConvolver::convolve(std::span<const double> u, const Spectrum& kernel,
                                  std::span<double> out) {
  impl_->load(u);
  fftw_execute_dft_r2c(impl_->forward, impl_->real.get(), impl_->spec.get());
  impl_->multiply_and_invert(kernel, out);
}

void FreeSpaceConvolver::convolve2(std::span<const double> u, const Spectrum& ka,
                                   const Spectrum& kb, std::span<double> out_a,
                                   std::span<double> out_b) {
  impl_->load(u);
  fftw_execute_dft_r2c(impl_->forward, impl_->real.get(), impl_->spec.get());
  impl_->multiply_and_invert(ka, out_a);
  impl_->multiply_and_invert(kb, out_b);
}

const FreeSpaceConvolver::Spectrum& FreeSpaceConvolver::newtonian_x() {
  if (!impl_->nx) {
    impl_->nx = kernel_spectrum([](int di, int dj) {
      if (di == 0 && dj == 0) return 0.0;
      return -(1.0 / (2.0 * kPi)) * di / static_cast<double>(di * di + dj * dj);
    });
  }
  return *impl_->nx;
}

const FreeSpaceConvolver::Spectrum& FreeSpaceConvolver::newtonian_y() {
  if (!impl_->ny) {
    impl_->ny = kernel_spectrum([](int di, int dj) {
      if (di == 0 && dj == 0) return 0.0;
      return -(1.0 / (2.0 * kPi)) * dj / static_cast<double>(di * di + dj * dj);
    });
  }
  return *impl_->ny;
}

const FreeSpaceConvolver::Spectrum& FreeSpaceConvolver::log_kernel() {
  if (!impl_->lg) {
    impl_->lg = kernel_spectrum([](int di, int dj) {
      if (di == 0 && dj == 0) return log_self_cell_mean();
      return 0.5 * std::log(static_cast<double>(di * di + dj * dj));
    });
  }
  return *impl_->lg;
}

FreeSpaceConvolver& convolver_for(int n) {
  thread_local std::map<int, std::unique_ptr<FreeSpaceConvolver>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FreeSpaceConvolver>(n);
  return *slot;
}

double log_self_cell_mean() noexcept {
  return 0.5 * (std::log(0.5) - 3.0 + kPi / 2.0);
}

VectorField newtonian_gradient(const ScalarField& u) {
  check_finite(u.values(), "newtonian_gradient");
  const auto& grid = u.grid();
  VectorField out(grid);
  auto& conv = convolver_for(grid.n());
  conv.convolve2(u.values(), conv.newtonian_x(), conv.newtonian_y(), out.vx(), out.vy());
  // Unit-spacing kernel: h^2 * (1/h) scaling of (x - y)/|x - y|^2.
  const double h = grid.h();
  for (auto& v : out.vx()) v *= h;
  for (auto& v : out.vy()) v *= h;
  return out;
}

VectorField newtonian_gradient(const DensityField& u) {
  return newtonian_gradient(u.scalar());
}

VectorField newtonian_gradient_direct(const ScalarField& u) {
  check_finite(u.values(), "newtonian_gradient_direct");
  const auto& grid = u.grid();
  const int n = grid.n();
  const double h = grid.h();
  VectorField out(grid);
  auto vals = u.values();
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t jr) {
    const int j = static_cast<int>(jr);
    for (int i = 0; i < n; ++i) {
      double sx = 0.0, sy = 0.0;
      for (int jj = 0; jj < n; ++jj) {
        for (int ii = 0; ii < n; ++ii) {
          if (ii == i && jj == j) continue;
          const double dx = i - ii, dy = j - jj;
          const double w = vals[grid.index(ii, jj)] / (dx * dx + dy * dy);
          sx += dx * w;
          sy += dy * w;
        }
      }
      const double c = -h / (2.0 * kPi);
      out.set(i, j, {c * sx, c * sy});
    }
  });
  return out;
}

Vec2 newtonian_gradient_at(const DensityField& u, const Vec2& x) {
  const auto& grid = u.grid();
  if (!grid.contains(x)) throw ArgumentError("newtonian_gradient_at: point outside domain");
  const int n = grid.n();
  const double h = grid.h();
  const double near2 = 4.0 * h * h;
  constexpr int kSub = 8;
  const double hs = h / kSub;
  const double skip2 = 1e-18 * h * h;
  double sx = 0.0, sy = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double uv = u(i, j);
      if (uv == 0.0) continue;
      const Vec2 c = grid.center(i, j);
      const Vec2 d = x - c;
      const double r2 = norm2(d);
      if (r2 > near2) {
        sx += uv * h * h * d.x / r2;
        sy += uv * h * h * d.y / r2;
        continue;
      }
      for (int b = 0; b < kSub; ++b) {
        for (int a = 0; a < kSub; ++a) {
          const Vec2 p{c.x - 0.5 * h + (a + 0.5) * hs, c.y - 0.5 * h + (b + 0.5) * hs};
          const Vec2 e = x - p;
          const double q2 = norm2(e);
          if (q2 < skip2) continue;
          sx += uv * hs * hs * e.x / q2;
          sy += uv * hs * hs * e.y / q2;
        }
      }
    }
  }
  const double c = -1.0 / (2.0 * kPi);
  return {c * sx, c * sy};
}

}  // namespace kslab
