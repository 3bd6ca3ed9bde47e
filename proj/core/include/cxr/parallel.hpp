#pragma once

#include <cstddef>
#include <functional>

namespace cxr {

// Runs task(i) for every i in [0, count) on up to `jobs` threads. After a
// failure no new tasks start; once running tasks finish, the exception of the
// lowest failing index is rethrown.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

}  // namespace cxr
