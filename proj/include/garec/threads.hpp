#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace garec {

// Splits [0, n) into `chunks` contiguous ranges (sizes differing by at most
// one) and runs fn(chunk_index, begin, end) on each, one thread per chunk.
// Chunk boundaries depend only on (n, chunks), so per-chunk results can be
// reduced in chunk order for a deterministic total.
inline void parallel_chunks(
    std::int64_t n, int chunks,
    const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  if (chunks < 1) chunks = 1;
  if (chunks > n) chunks = static_cast<int>(n);
  if (chunks == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (int c = 0; c < chunks; ++c) {
    std::int64_t begin = n * c / chunks;
    std::int64_t end = n * (c + 1) / chunks;
    workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace garec
