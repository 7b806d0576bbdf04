#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <vector>

#include <omp.h>

namespace rpmeas {

// Number of OpenMP workers used by the ensemble kernels. Results never depend on it.
int worker_count();
void set_worker_count(int n);

// Items are grouped into fixed-size blocks. Each block is folded sequentially into
// its own accumulator, and block accumulators are merged into the result in block
// order. Block boundaries do not depend on the worker count, so the result is
// bit-identical for any number of workers. Blocks are processed in waves of
// `worker_count()` to bound the number of live accumulators.
//
//   make()                 -> Acc        fresh accumulator
//   body(Acc&, size_t i)                 fold item i
//   merge(Acc& into, Acc&& from)         ordered merge
template <class Acc, class Make, class Body, class Merge>
Acc block_reduce(std::size_t n_items, std::size_t block_size, Make make, Body body,
                 Merge merge) {
  block_size = std::max<std::size_t>(block_size, 1);
  const std::size_t n_blocks = (n_items + block_size - 1) / block_size;
  Acc total = make();
  const std::size_t wave = static_cast<std::size_t>(std::max(1, worker_count()));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t first = 0; first < n_blocks; first += wave) {
    const std::size_t last = std::min(n_blocks, first + wave);
    std::vector<Acc> partial;
    partial.reserve(last - first);
    for (std::size_t b = first; b < last; ++b) partial.push_back(make());
    const auto n_wave = static_cast<std::ptrdiff_t>(last - first);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
    for (std::ptrdiff_t w = 0; w < n_wave; ++w) {
      const std::size_t b = first + static_cast<std::size_t>(w);
      const std::size_t lo = b * block_size;
      const std::size_t hi = std::min(n_items, lo + block_size);
      try {
        for (std::size_t i = lo; i < hi; ++i) body(partial[static_cast<std::size_t>(w)], i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    for (auto& acc : partial) merge(total, std::move(acc));
  }
  return total;
}

// Independent per-item work with no reduction (each item writes its own slot).
template <class Body>
void parallel_for(std::size_t n_items, Body body) {
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto n = static_cast<std::ptrdiff_t>(n_items);
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace rpmeas
