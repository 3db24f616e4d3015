#pragma once

#include <cstddef>
#include <functional>

namespace mtq {

// Runs fn(begin, end) over [0, n) split into fixed-size chunks. Chunk
// boundaries depend only on n and chunk, never on the thread count, and each
// chunk writes disjoint state, so results are identical for any `threads`.
void parallel_chunks(std::size_t n, std::size_t chunk, int threads,
                     const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace mtq
