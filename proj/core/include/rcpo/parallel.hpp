#pragma once

#include <cstddef>
#include <functional>

namespace rcpo {

/// Worker cap: RCPO_THREADS when set, otherwise the processor count.
std::size_t worker_count();

/// Runs `body(begin, end)` over disjoint chunks of [0, n), possibly on
/// several threads. Chunks write independent state only; callers reduce
/// afterwards in canonical order so results do not depend on the worker
/// count.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace rcpo
