#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace riskfield {

/// Worker count: RISKFIELD_THREADS if set (>= 1), else hardware concurrency.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RISKFIELD_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<unsigned>(std::min<long>(n, 1024));
    } catch (const std::exception&) {
    }
  }
  return hw;
}

/// Runs body(i) for i in [0, n). Indices are claimed dynamically; results
/// must be written to per-index slots. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body, unsigned threads = thread_count()) {
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace riskfield
