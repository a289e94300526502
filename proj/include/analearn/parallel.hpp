#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace analearn {

/// Runs fn(i) for i in [0, count). threads <= 1 executes inline in index
/// order (the deterministic path); otherwise indices are striped over a
/// short-lived thread group. fn must not touch shared mutable state unless
/// it owns the index-addressed slot.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::vector<std::thread> group;
  group.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    group.emplace_back([&, w]() {
      for (int i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : group) t.join();
}

}  // namespace analearn
