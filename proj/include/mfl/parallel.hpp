#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mfl {

// Worker cap shared by all parallel loops. Results never depend on it: loops
// only write to disjoint per-index slots and reductions run serially.
inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap{std::thread::hardware_concurrency()};
  return cap;
}

inline void set_num_threads(unsigned n) { thread_cap().store(n == 0 ? 1 : n); }
inline unsigned num_threads() {
  unsigned n = thread_cap().load();
  return n == 0 ? 1 : n;
}

namespace detail {

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // Runs fn(begin, end) over a partition of [0, n) on up to num_threads()
  // workers. Blocks until all chunks finish; rethrows the first exception.
  void run_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(num_threads(), n));
    if (workers <= 1) {
      fn(0, n);
      return;
    }
    ensure_workers(workers - 1);

    const std::size_t chunks = std::min<std::size_t>(n, std::size_t(workers) * 4);
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto body = [&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= chunks) break;
        const std::size_t b = c * n / chunks;
        const std::size_t e = (c + 1) * n / chunks;
        try {
          if (b < e) fn(b, e);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    };

    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = body;
      tickets_ = static_cast<int>(workers - 1);
      finished_ = 0;
      ++generation_;
      cv_.notify_all();
    }
    body();
    {
      std::unique_lock<std::mutex> lk(mu_);
      const int needed = static_cast<int>(workers - 1);
      done_cv_.wait(lk, [&] { return finished_ == needed; });
      job_ = nullptr;
      tickets_ = 0;
    }
    if (err) std::rethrow_exception(err);
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      ++generation_;
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

 private:
  ThreadPool() = default;

  void ensure_workers(unsigned n) {
    std::unique_lock<std::mutex> lk(mu_);
    while (threads_.size() < n) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || (generation_ != seen && tickets_ > 0); });
        if (stop_) return;
        seen = generation_;
        --tickets_;
        job = job_;
      }
      job();
      {
        std::unique_lock<std::mutex> lk(mu_);
        ++finished_;
        done_cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  std::function<void()> job_;
  int tickets_ = 0;
  int finished_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace detail

// Parallel loop over [0, n). fn(i) must only touch slot i of shared buffers.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  detail::ThreadPool::instance().run_chunks(
      n, [&fn](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
      });
}

// Coarse-grained variant: fn(task) for task in [0, n_tasks), one chunk per
// task (e.g. one MCMC chain each).
template <typename Fn>
void parallel_tasks(std::size_t n_tasks, Fn&& fn) {
  parallel_for(n_tasks, std::forward<Fn>(fn));
}

}  // namespace mfl
