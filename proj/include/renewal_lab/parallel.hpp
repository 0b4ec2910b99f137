#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace renewal_lab {

// Runs fn(chunk, begin, end) over fixed-size chunks of [0, n). Chunk layout
// does not depend on the worker count, so per-chunk results combined in chunk
// order are identical for any number of jobs.
template <class Fn>
void for_each_chunk(std::int64_t n, std::int64_t chunk, int jobs, Fn&& fn) {
  const std::int64_t nchunks = (n + chunk - 1) / chunk;
  if (nchunks <= 0) return;
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::min<std::int64_t>(nchunks, 256))));
  auto run = [&](std::int64_t c) { fn(c, c * chunk, std::min(n, (c + 1) * chunk)); };
  if (jobs == 1) {
    for (std::int64_t c = 0; c < nchunks; ++c) run(c);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::int64_t c; (c = next.fetch_add(1)) < nchunks;) {
        try {
          run(c);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace renewal_lab
