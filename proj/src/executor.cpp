#include "deepgep/executor.hpp"

#include <thread>

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace deepgep {

struct PoolExecutor::Arena {
  // The global limit defaults to the core count; raise it so a requested
  // oversubscription is honoured rather than warned about.
  explicit Arena(int threads)
      : limit(tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(threads)), arena(threads) {}
  tbb::global_control limit;
  mutable tbb::task_arena arena;
};

PoolExecutor::PoolExecutor(std::size_t threads)
    : threads_(threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads),
      arena_(std::make_unique<Arena>(static_cast<int>(threads_))) {}

PoolExecutor::~PoolExecutor() = default;

void PoolExecutor::parallel_for(std::size_t n,
                                const std::function<void(std::size_t)>& task) const {
  if (n == 0) return;
  arena_->arena.execute([&] {
    tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { task(i); });
  });
}

const Executor& sequential_executor() {
  static const SequentialExecutor exec;
  return exec;
}

}  // namespace deepgep
