#include "genmix/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace genmix {

namespace {

std::atomic<int> g_max_threads{0};

int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs `jobs` closures indexed 0..count-1 across up to max_threads() workers.
template <typename Job>
void run_jobs(int count, const Job& job) {
  const int workers = std::min(count, max_threads());
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int t = 0; t < workers - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

void set_max_threads(int n) { g_max_threads.store(n > 0 ? n : 0); }

int max_threads() {
  const int n = g_max_threads.load();
  return n > 0 ? n : hardware_threads();
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& body) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<std::int64_t>(n, max_threads()));
  if (workers <= 1) {
    body(begin, end);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  run_jobs(workers, [&](int i) {
    const std::int64_t lo = begin + chunk * i;
    const std::int64_t hi = std::min(end, lo + chunk);
    if (lo < hi) body(lo, hi);
  });
}

void parallel_chunks(std::int64_t n, int k,
                     const std::function<void(int, std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int chunks = static_cast<int>(std::min<std::int64_t>(n, k));
  const std::int64_t chunk = (n + chunks - 1) / chunks;
  run_jobs(chunks, [&](int i) {
    const std::int64_t lo = chunk * i;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo < hi) body(i, lo, hi);
  });
}

}  // namespace genmix
