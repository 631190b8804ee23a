#pragma once

#include <cstddef>
#include <functional>

namespace cgvar {

/// Number of worker threads: hardware concurrency, capped by CGVAR_THREADS.
std::size_t worker_count();

/// Runs body(block) for every block in [0, n_blocks). Blocks are handed out to
/// at most worker_count() threads; the caller reduces per-block results in
/// block order so results do not depend on the thread count.
void parallel_blocks(std::size_t n_blocks, const std::function<void(std::size_t)>& body);

}  // namespace cgvar
