#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace tgl {

// Minimal fork-join pool for row-parallel kernels. Work is split into
// contiguous index ranges, so results are bitwise independent of the thread
// count: every output element is produced by exactly one range, and each
// range computes in a fixed order.
class ThreadPool {
 public:
  static ThreadPool& instance();

  explicit ThreadPool(int threads);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int size() const { return static_cast<int>(workers_.size()); }

  // Runs fn(begin, end) over a partition of [0, n). Blocks until done.
  // Calls from within a pool task run inline to avoid deadlock.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

 private:
  void worker_loop();

  std::vector<std::thread> workers_;
  std::queue<std::function<void()>> tasks_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
};

}  // namespace tgl
