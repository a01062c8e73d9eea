#include "mflab/parallel.hpp"

namespace mflab {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Executor::Executor(std::size_t workers) : workers_(workers == 0 ? 1 : workers) {
  for (std::size_t i = 1; i < workers_; ++i) {
    threads_.emplace_back([this] { worker_loop(); });
  }
}

Executor::~Executor() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void Executor::run(std::size_t tasks,
                   const std::function<void(std::size_t)>& fn) {
  if (workers_ == 1 || tasks <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  {
    std::lock_guard lock(mu_);
    job_ = &fn;
    tasks_ = tasks;
    next_ = 0;
    finished_ = 0;
    ++generation_;
  }
  start_cv_.notify_all();
  // The calling thread takes tasks too.
  for (;;) {
    std::size_t i;
    {
      std::lock_guard lock(mu_);
      if (next_ >= tasks_) break;
      i = next_++;
    }
    fn(i);
    std::lock_guard lock(mu_);
    ++finished_;
  }
  std::unique_lock lock(mu_);
  done_cv_.wait(lock, [&] { return finished_ == tasks_; });
  job_ = nullptr;
}

void Executor::worker_loop() {
  std::size_t seen = 0;
  for (;;) {
    std::unique_lock lock(mu_);
    start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    while (job_ != nullptr && next_ < tasks_) {
      const std::size_t i = next_++;
      const auto* job = job_;
      lock.unlock();
      (*job)(i);
      lock.lock();
      if (++finished_ == tasks_) done_cv_.notify_all();
    }
  }
}

}  // namespace mflab
