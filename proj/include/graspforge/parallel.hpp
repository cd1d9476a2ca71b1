#pragma once

#include <cstddef>
#include <functional>

namespace graspforge {

/// Runs fn(i) for every i in [0, n) on up to `threads` workers, each owning a
/// contiguous block. fn must only write state owned by i, which makes the
/// result independent of the thread count. If calls throw, the exception of
/// the lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// GRASPFORGE_THREADS when set to a positive integer, otherwise 1.
int default_threads();

}  // namespace graspforge
