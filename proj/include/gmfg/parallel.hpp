#pragma once

#include <cstddef>
#include <functional>

namespace gmfg {

/// Worker count requested by the caller, capped by the GMFG_THREADS
/// environment variable when it is set. Always >= 1.
int effective_threads(int requested);

/// Static-partition parallel loop over [0, count). Each worker receives one
/// contiguous [begin, end) chunk; chunk boundaries depend only on (count,
/// threads), so any body that writes index-local output is deterministic
/// regardless of the worker count.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t begin, std::size_t end)>& body);

} // namespace gmfg
