#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace filmgrade {

// Worker count for data-parallel loops. FILMGRADE_THREADS caps it; results
// never depend on the value because every index is computed independently
// and reductions are performed sequentially by the callers.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FILMGRADE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<unsigned>(std::min<long>(v, 256));
  }
  return hw;
}

// Calls fn(i) for every i in [begin, end), split into contiguous blocks.
// fn must only write state owned by index i. The first exception thrown by
// any block is rethrown on the calling thread after all blocks finish.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn, std::size_t min_block = 16) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  std::size_t workers = std::min<std::size_t>(thread_count(), (n + min_block - 1) / min_block);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&](std::size_t lo, std::size_t hi) {
    try {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
      const std::size_t lo = begin + w * chunk;
      const std::size_t hi = std::min(end, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run, lo, hi);
    }
    run(begin, std::min(end, begin + chunk));
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace filmgrade
