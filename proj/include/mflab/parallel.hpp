#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace mflab {

/// Particles are processed in blocks of this size. Partial results are kept
/// per block and combined in block order, so the floating-point result does
/// not depend on how many workers executed the blocks.
inline constexpr std::size_t kBlockSize = 256;

inline std::size_t block_count(std::size_t n) {
  return (n + kBlockSize - 1) / kBlockSize;
}

/// Fixed-shape pairwise summation.
double pairwise_sum(std::span<const double> values);

/// Small fork-join pool. `run(tasks, fn)` calls fn(i) for i in [0, tasks) and
/// returns once all calls have finished. With one worker everything runs on
/// the calling thread.
class Executor {
 public:
  explicit Executor(std::size_t workers = 1);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  std::size_t workers() const { return workers_; }
  void run(std::size_t tasks, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t tasks_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace mflab
