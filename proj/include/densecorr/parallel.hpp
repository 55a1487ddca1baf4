#pragma once

#include <cstddef>
#include <functional>

namespace densecorr {

/// Threads to use when the caller passes 0: DENSECORR_THREADS, else 1.
int default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work is split
/// into contiguous index ranges, so any per-index writes are race free and
/// results do not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace densecorr
