#pragma once

#include <cstddef>
#include <functional>

namespace ovrp {

/// Worker cap: OVRP_THREADS if set to a positive integer, otherwise the
/// hardware concurrency. Read on every call.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Work items must be independent; any ordering
/// of side effects is the caller's responsibility (write into slot i).
/// Nested calls from inside a worker run serially on that worker, so
/// parallel grids over fits do not oversubscribe. The first exception thrown
/// by any item is rethrown after all workers have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ovrp
