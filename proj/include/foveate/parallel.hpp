#pragma once

#include <cstddef>
#include <functional>

namespace foveate {

// Worker count from FOVEATE_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

// Splits [0, n) into contiguous blocks and runs body(begin, end) on each.
// Blocks never overlap, so bodies that only write to their own index range
// produce results independent of the number of workers.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace foveate
