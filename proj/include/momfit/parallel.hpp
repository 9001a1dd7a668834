#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace momfit {

// worker count: MOMFIT_THREADS if set, else the hardware concurrency
inline int thread_count() {
  if (const char* env = std::getenv("MOMFIT_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// run fn(block_index, lo, hi) over fixed-size index blocks.  the block
// decomposition depends only on total and block_size, so per-block results
// combined in block order are identical for every thread count.
template <typename Fn>
void for_each_block(std::ptrdiff_t total, std::ptrdiff_t block_size, Fn&& fn) {
  const std::ptrdiff_t nblocks = (total + block_size - 1) / block_size;
  const int workers = std::min<std::ptrdiff_t>(thread_count(), nblocks);
  if (workers <= 1) {
    for (std::ptrdiff_t b = 0; b < nblocks; ++b)
      fn(b, b * block_size, std::min(total, (b + 1) * block_size));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::ptrdiff_t b = w; b < nblocks; b += workers)
        fn(b, b * block_size, std::min(total, (b + 1) * block_size));
    });
  }
  for (auto& t : pool) t.join();
}

// sum per-block partials with a pairwise tree so the rounding pattern is
// independent of thread count and gentler than a running sum.  Partial must
// support operator+= and the blocks vector is consumed in index order.
template <typename Partial>
Partial pairwise_combine(std::vector<Partial>& blocks, std::ptrdiff_t lo, std::ptrdiff_t hi) {
  if (hi - lo == 1) return std::move(blocks[lo]);
  const std::ptrdiff_t mid = lo + (hi - lo) / 2;
  Partial left = pairwise_combine(blocks, lo, mid);
  Partial right = pairwise_combine(blocks, mid, hi);
  left += right;
  return left;
}

}  // namespace momfit
