#pragma once

namespace nngp {

/// Number of threads that library loops may use from the calling thread.
/// Defaults to 1. Each thread has its own budget so concurrent chains can
/// split a global budget without oversubscribing.
int thread_budget() noexcept;

/// Sets the budget for the calling thread; values below 1 are clamped to 1.
void set_thread_budget(int threads) noexcept;

/// Physical core count reported by the system, capped at `cap`.
int default_thread_count(int cap = 12) noexcept;

/// Restores the previous budget of the calling thread on destruction.
class ThreadBudgetScope {
 public:
  explicit ThreadBudgetScope(int threads) noexcept;
  ~ThreadBudgetScope();
  ThreadBudgetScope(const ThreadBudgetScope&) = delete;
  ThreadBudgetScope& operator=(const ThreadBudgetScope&) = delete;

 private:
  int previous_;
};

}  // namespace nngp
