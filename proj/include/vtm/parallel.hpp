#pragma once

#include <cstddef>
#include <functional>

namespace vtm {

/// Global cap on worker threads; 0 means hardware concurrency.
void set_thread_limit(unsigned n);
unsigned thread_limit();

/// Calls fn(i) for i in [0, n) across up to thread_limit() threads. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vtm
