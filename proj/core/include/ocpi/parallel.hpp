#pragma once

#include <cstddef>
#include <functional>

namespace ocpi {

// Process-wide worker count for parallel_for (default 1). Results never
// depend on it: callers write to disjoint slots and reduce in index order.
void set_thread_count(int n);
int thread_count() noexcept;

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ocpi
