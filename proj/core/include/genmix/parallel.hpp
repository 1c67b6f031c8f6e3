#pragma once

#include <cstdint>
#include <functional>

namespace genmix {

// Worker cap for parallel_for; 0 restores the hardware default.
void set_max_threads(int n);
int max_threads();

// Runs body(begin, end) over contiguous chunks of [begin, end). Each index is
// visited by exactly one invocation, so maps over disjoint outputs are
// bitwise deterministic regardless of the thread count. Reductions must use
// parallel_chunks instead.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& body);

// Fixed partition of [0, n) into k chunks (k independent of thread count),
// body(chunk_index, begin, end). Callers reduce per-chunk partials in chunk
// order to keep float sums identical for any worker count.
void parallel_chunks(std::int64_t n, int k,
                     const std::function<void(int, std::int64_t, std::int64_t)>& body);

inline constexpr int kReduceChunks = 16;

}  // namespace genmix
