#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace kslab {

/// Worker count for data-parallel kernels: hardware concurrency, capped by
/// the KSLAB_THREADS environment variable when it is set to a positive int.
unsigned kernel_threads() noexcept;

/// Runs body(k) for k in [begin, end) split into contiguous chunks. Each
/// index is visited exactly once; bodies must write disjoint outputs.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body) {
  const std::size_t count = end > begin ? end - begin : 0;
  const std::size_t workers =
      std::min<std::size_t>(kernel_threads(), count / 16 + 1);
  if (workers <= 1) {
    for (std::size_t k = begin; k < end; ++k) body(k);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t k = lo; k < hi; ++k) body(k);
    });
  }
  for (std::size_t k = begin; k < std::min(end, begin + chunk); ++k) body(k);
}

}  // namespace kslab
