#include "nngp/parallel.hpp"

#include <algorithm>
#include <thread>

namespace nngp {
namespace {
thread_local int budget = 1;
}

int thread_budget() noexcept { return budget; }

void set_thread_budget(int threads) noexcept { budget = std::max(1, threads); }

int default_thread_count(int cap) noexcept {
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(hw, 1, std::max(1, cap));
}

ThreadBudgetScope::ThreadBudgetScope(int threads) noexcept
    : previous_(budget) {
  set_thread_budget(threads);
}

ThreadBudgetScope::~ThreadBudgetScope() { budget = previous_; }

}  // namespace nngp
