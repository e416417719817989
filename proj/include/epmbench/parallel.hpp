#pragma once

#include <cstddef>
#include <functional>

namespace epmbench {

/// Worker count from EPMBENCH_THREADS, falling back to hardware concurrency.
int default_thread_count();

/// Runs body(i) for every i in [0, n) across `threads` workers. Work is split into
/// contiguous blocks, so any result written to slot i is independent of scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace epmbench
