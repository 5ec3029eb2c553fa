#include "tgl/thread_pool.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>

namespace tgl {

namespace {
thread_local bool g_inside_pool_task = false;

int default_thread_count() {
  if (const char* env = std::getenv("TGL_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 4;
  return static_cast<int>(std::min(hw, 8u));
}
}  // namespace

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool(default_thread_count());
  return pool;
}

ThreadPool::ThreadPool(int threads) {
  threads = std::max(1, threads);
  for (int i = 0; i < threads; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
}

void ThreadPool::worker_loop() {
  g_inside_pool_task = true;
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [this] { return stop_ || !tasks_.empty(); });
      if (stop_ && tasks_.empty()) return;
      task = std::move(tasks_.front());
      tasks_.pop();
    }
    task();
  }
}

void ThreadPool::parallel_for(int64_t n,
                              const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int nthreads = size();
  // Small jobs and nested calls run inline; chunk boundaries never change
  // the numeric result, only the schedule.
  if (g_inside_pool_task || nthreads <= 1 || n < 256) {
    fn(0, n);
    return;
  }
  const int chunks = static_cast<int>(std::min<int64_t>(nthreads, n));
  const int64_t per = (n + chunks - 1) / chunks;

  std::atomic<int> remaining{chunks};
  std::mutex done_mu;
  std::condition_variable done_cv;

  {
    std::lock_guard<std::mutex> lk(mu_);
    for (int c = 0; c < chunks; ++c) {
      const int64_t b = c * per;
      const int64_t e = std::min<int64_t>(n, b + per);
      tasks_.emplace([&, b, e] {
        fn(b, e);
        if (remaining.fetch_sub(1) == 1) {
          std::lock_guard<std::mutex> dlk(done_mu);
          done_cv.notify_all();
        }
      });
    }
  }
  cv_.notify_all();
  std::unique_lock<std::mutex> lk(done_mu);
  done_cv.wait(lk, [&] { return remaining.load() == 0; });
}

}  // namespace tgl
