#pragma once

#include <cstddef>
#include <functional>

namespace covbeam {

// Worker count: COVBEAM_THREADS env var if set, otherwise the CPUs this
// process may actually run on.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks handed to
// workers, so results must not depend on execution order (callers only write
// disjoint outputs). With one worker this is a plain loop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace covbeam
