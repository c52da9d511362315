#pragma once

// Bounded worker pool over an index range. Results go to index-addressed
// slots, so the output never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace slab::pipeline {

/// Runs fn(i) for i in [0, n) on at most `workers` threads. An exception in
/// one task is captured as that task's error message; the others still run.
inline std::vector<std::optional<std::string>> parallel_for(std::size_t n, unsigned workers,
                                                            const std::function<void(std::size_t)>& fn) {
  std::vector<std::optional<std::string>> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    } catch (...) {
      errors[i] = "unknown error";
    }
  };
  const auto threads = std::min<std::size_t>(std::max(1u, workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) run(i);
      });
  }
  return errors;
}

}  // namespace slab::pipeline
