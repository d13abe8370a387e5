#pragma once

#include <cstddef>
#include <functional>

namespace ncx {

// Worker count: NCX_THREADS when set to a positive integer, otherwise the
// hardware concurrency.  Always at least 1.
int thread_count();

// Calls fn(i) for i in [0, n).  Indices are split into contiguous chunks, one
// per worker, so every index is handled exactly once and callers that write
// results into slot i get output independent of the worker count.  The
// exception of the lowest failing index is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ncx
