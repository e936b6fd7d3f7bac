#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace motif {

/// Keeps large tensor buffers inside the heap arena instead of per-call
/// mmap/munmap cycles, which refault every page on each training step.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

/// Worker-thread cap: MOTIF_THREADS if set, else hardware concurrency.
inline int max_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("MOTIF_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
  }();
  return n;
}

namespace detail {

// Persistent pool. Work items are contiguous index ranges; every range is
// computed independently, so results do not depend on which thread ran it.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool(max_threads());
    return pool;
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    if (size() == 1 || n == 1 || in_worker_) {
      body(0, n);
      return;
    }
    const std::size_t chunks = std::min(n, static_cast<std::size_t>(size()));
    {
      std::unique_lock<std::mutex> lock(mutex_);
      body_ = &body;
      total_ = n;
      chunks_ = chunks;
      next_chunk_.store(0, std::memory_order_relaxed);
      pending_ = chunks;
      ++generation_;
    }
    cv_.notify_all();
    work_chunks();
    {
      // Wait until every chunk ran and no thread still holds the body pointer.
      std::unique_lock<std::mutex> lock(mutex_);
      done_cv_.wait(lock, [this] { return pending_ == 0 && active_ == 0; });
      body_ = nullptr;
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

 private:
  explicit ThreadPool(int nthreads) {
    for (int i = 1; i < nthreads; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    in_worker_ = true;
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work_chunks();
    }
  }

  void work_chunks() {
    const std::function<void(std::size_t, std::size_t)>* body;
    std::size_t total, chunks;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      if (!body_) return;
      body = body_;
      total = total_;
      chunks = chunks_;
      ++active_;
    }
    std::size_t finished = 0;
    for (;;) {
      const std::size_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
      if (c >= chunks) break;
      const std::size_t begin = c * total / chunks;
      const std::size_t end = (c + 1) * total / chunks;
      (*body)(begin, end);
      ++finished;
    }
    {
      std::unique_lock<std::mutex> lock(mutex_);
      pending_ -= finished;
      --active_;
      if (pending_ == 0 && active_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t total_ = 0, chunks_ = 0, pending_ = 0, active_ = 0;
  std::atomic<std::size_t> next_chunk_{0};
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  static thread_local bool in_worker_;
};

inline thread_local bool ThreadPool::in_worker_ = false;

}  // namespace detail

/// Runs body(begin, end) over a partition of [0, n). Chunks are disjoint, so
/// any kernel whose writes stay inside its range is bit-deterministic
/// regardless of scheduling.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  const std::function<void(std::size_t, std::size_t)> fn = std::forward<F>(body);
  detail::ThreadPool::instance().run(n, fn);
}

/// FNV-1a, the project-wide 64-bit content hash.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace motif
