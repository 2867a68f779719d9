#pragma once

#include <cstddef>
#include <functional>

namespace forge {

/// Worker cap: AVATAR_FORGE_THREADS if set and positive, else hardware concurrency.
int thread_limit();

/// Runs fn(i) for i in [0, n). Each index runs exactly once; callers must
/// write only to per-index slots so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace forge
