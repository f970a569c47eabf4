#include "advkit/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "advkit/error.hpp"

namespace advkit {
namespace {
std::atomic<unsigned> g_threads{1};
thread_local bool t_inside_worker = false;

struct WorkerScope {
  bool previous = t_inside_worker;
  WorkerScope() { t_inside_worker = true; }
  ~WorkerScope() { t_inside_worker = previous; }
};
}

void set_thread_count(unsigned n) {
  if (n == 0) fail(Errc::invalid_argument, "thread count must be positive");
  g_threads.store(n);
}

unsigned thread_count() noexcept { return g_threads.load(); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  // Nested loops run inline on the calling worker.
  const std::size_t workers = t_inside_worker ? 1 : std::min<std::size_t>(thread_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    WorkerScope scope;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace advkit
