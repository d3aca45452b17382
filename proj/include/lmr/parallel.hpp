#pragma once

#include <cstddef>
#include <functional>

namespace lmr {

/// Worker count for parallel_for: set_thread_count() if called, otherwise
/// the LMR_THREADS environment variable, otherwise hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
/// results into per-index slots so the outcome is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lmr
