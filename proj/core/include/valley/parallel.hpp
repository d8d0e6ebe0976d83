#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace valley {

// Worker cap: VALLEY_THREADS when set, hardware concurrency otherwise.
std::size_t worker_count();

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n). Chunk
// boundaries depend only on (n, chunk_size), so per-chunk results reduced in
// chunk order are identical for any worker count.
template <class Fn>
void for_chunks(std::size_t n, std::size_t chunk_size, Fn&& fn) {
  if (n == 0) return;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const std::size_t workers = std::min(worker_count(), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
        fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace valley
