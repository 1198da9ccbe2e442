#pragma once

#include <functional>

namespace quadfit {

/// Worker cap used by every parallel loop; 0 means hardware concurrency.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, n). Callers write results to per-index slots and
/// reduce afterwards, so output does not depend on scheduling.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace quadfit
