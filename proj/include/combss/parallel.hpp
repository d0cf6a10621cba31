#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace combss::detail {

// Runs body(i) for i in [0, count). Worker threads pull indices from a shared
// counter; bodies must not touch shared mutable state beyond their own slot.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    };
    const int pool = std::min(threads, count);
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(pool - 1));
    for (int w = 1; w < pool; ++w) workers.emplace_back(worker);
    worker();
    for (auto& t : workers) t.join();
}

}  // namespace combss::detail
