#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace sfl {

// Worker count from SFL_WORKERS (default 1). Never affects results.
int worker_count();

// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks are dispatched
// in an order permuted by `schedule_seed`; callers must write results to
// per-index slots. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn,
                  std::uint64_t schedule_seed = 0);

}  // namespace sfl
