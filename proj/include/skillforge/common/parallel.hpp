#pragma once

#include <cstddef>
#include <functional>

namespace skillforge {

/// Worker count: SKILLFORGE_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_budget();

/// Runs body(i) for i in [0, n). Each index must write only its own output
/// slot; results are then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace skillforge
