#include "cgvar/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cgvar {

std::size_t worker_count() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CGVAR_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) {
        n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
      }
    } catch (const std::exception&) {
      // unparsable value: keep the hardware default
    }
  }
  return n;
}

void parallel_blocks(std::size_t n_blocks, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n_blocks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) {
      body(b);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t b = next++; b < n_blocks; b = next++) {
      try {
        body(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) {
    pool.emplace_back(run);
  }
  run();
  pool.clear();
  if (failure) {
    std::rethrow_exception(failure);
  }
}

}  // namespace cgvar
