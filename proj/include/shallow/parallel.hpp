#pragma once

#include <cstddef>
#include <functional>

namespace shallow {

/// Worker count: SHALLOW_RECOVER_THREADS if set and positive, otherwise the
/// hardware concurrency (0 means auto as well).
int worker_count();

/// Runs job(i) for i in [0, count) on up to `workers` threads. Jobs must
/// write only to their own slot of any shared output. If jobs throw, the
/// exception from the lowest index is rethrown after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job,
                  int workers = worker_count());

}  // namespace shallow
