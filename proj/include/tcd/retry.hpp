#pragma once

#include <algorithm>
#include <chrono>
#include <exception>
#include <thread>

namespace tcd {

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30'000};

  std::chrono::milliseconds delay_for(int attempt) const {
    double ms = static_cast<double>(initial_delay.count());
    for (int i = 0; i < attempt; ++i) ms *= multiplier;
    return std::min(max_delay, std::chrono::milliseconds(static_cast<long long>(ms)));
  }
};

/// Calls `fn` until it succeeds or `policy.max_retries` retries are spent.
/// Exceptions for which `retryable(ex)` is false propagate immediately.
template <typename Fn, typename Retryable>
auto with_retries(const RetryPolicy& policy, Fn&& fn, Retryable&& retryable) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const std::exception& ex) {
      if (attempt >= policy.max_retries || !retryable(ex)) throw;
    }
    std::this_thread::sleep_for(policy.delay_for(attempt));
  }
}

}  // namespace tcd
