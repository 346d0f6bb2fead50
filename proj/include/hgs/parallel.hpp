#pragma once

#include <cstddef>
#include <functional>

namespace hgs {

// Worker count: HGS_NUM_THREADS if set and positive, else hardware concurrency.
int default_worker_count();

// Runs body(i) for i in [0, n) on `workers` threads. Work items are claimed
// dynamically, so body must only write state owned by index i.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

} // namespace hgs
