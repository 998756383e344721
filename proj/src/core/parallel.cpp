#include "oat/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace oat {
namespace {
std::atomic<bool> g_deterministic{false};
}

void set_deterministic(bool on) noexcept { g_deterministic = on; }
bool deterministic() noexcept { return g_deterministic; }

std::size_t thread_count() noexcept {
  if (g_deterministic) return 1;
  if (const char* env = std::getenv("OAT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

std::size_t parallel_workers(std::size_t n) noexcept {
  if (n == 0) return 0;
  const std::size_t workers = std::min(thread_count(), n);
  const std::size_t chunk = (n + workers - 1) / workers;
  return (n + chunk - 1) / chunk;
}

void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  const std::size_t workers = parallel_workers(n);
  if (workers == 0) return;
  if (workers == 1) {
    body(0, 0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    pool.emplace_back([&, w, b, e] {
      try {
        body(w, b, e);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  parallel_for_indexed(n, [&body](std::size_t, std::size_t b, std::size_t e) { body(b, e); });
}

}  // namespace oat
