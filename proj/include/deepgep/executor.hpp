#pragma once

#include <cstddef>
#include <functional>
#include <memory>

namespace deepgep {

/// Parallel map over task indices. Tasks must only write to slots keyed by
/// their own index; randomness must come from streams derived from the index.
/// Under that discipline results are independent of the thread count.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) const = 0;
  virtual std::size_t concurrency() const = 0;
};

class SequentialExecutor final : public Executor {
 public:
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) const override {
    for (std::size_t i = 0; i < n; ++i) task(i);
  }
  std::size_t concurrency() const override { return 1; }
};

/// Work-stealing pool (oneTBB arena) with a fixed number of threads.
class PoolExecutor final : public Executor {
 public:
  /// threads == 0 selects the hardware concurrency.
  explicit PoolExecutor(std::size_t threads);
  ~PoolExecutor() override;
  PoolExecutor(const PoolExecutor&) = delete;
  PoolExecutor& operator=(const PoolExecutor&) = delete;

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) const override;
  std::size_t concurrency() const override { return threads_; }

 private:
  struct Arena;
  std::size_t threads_;
  std::unique_ptr<Arena> arena_;
};

const Executor& sequential_executor();

}  // namespace deepgep
