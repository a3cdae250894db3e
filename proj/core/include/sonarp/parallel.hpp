#pragma once

#include <cstddef>
#include <functional>

namespace sonarp {

/// Worker cap for data-parallel loops. Defaults to SONARP_THREADS when set,
/// otherwise the OpenMP default (1 without OpenMP).
std::size_t num_threads();
void set_num_threads(std::size_t n);

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; the
/// result is then independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sonarp
