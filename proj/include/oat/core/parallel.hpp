#pragma once

#include <cstddef>
#include <functional>

namespace oat {

/// Worker count taken from OAT_THREADS (default 1). Deterministic mode forces 1.
std::size_t thread_count() noexcept;
void set_deterministic(bool on) noexcept;
bool deterministic() noexcept;

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks never share
/// output indices, so results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Number of chunks parallel_for_indexed will use for n items.
std::size_t parallel_workers(std::size_t n) noexcept;
/// As parallel_for, also passing the chunk index in [0, parallel_workers(n)).
/// The first exception thrown by any chunk is rethrown after all chunks join.
void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace oat
