#pragma once

#include <cstddef>
#include <functional>

namespace story {

/// Worker cap from STORY_DECODER_THREADS; 1 when unset or unparsable.
std::size_t worker_count_from_env();

/// Runs fn(0..n-1) on up to `workers` threads. Each index runs exactly once;
/// callers write results to per-index slots so the outcome does not depend on
/// scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace story
