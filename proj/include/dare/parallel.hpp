#pragma once

#include <functional>

namespace dare {

// Worker count used by parallel_for; 0 selects hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Runs body(b) for every b in [begin, end), split into contiguous chunks.
// Bodies must write disjoint outputs; no reductions happen here, so results do
// not depend on the thread count.
void parallel_for(int begin, int end, const std::function<void(int)> &body);

} // namespace dare
