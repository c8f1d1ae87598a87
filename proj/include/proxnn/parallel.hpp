#pragma once

#include <cstddef>
#include <functional>

namespace proxnn {

/// Worker count: PROXNN_THREADS if set and positive, otherwise hardware concurrency.
int worker_count();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write results
/// into per-index slots and reduce them afterwards in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace proxnn
