#pragma once
#include <vector>

namespace twophase {

// Weighted least-squares isotonic regression (nondecreasing fit), pool
// adjacent violators with a block stack, O(n). Weights must be >= 0 with at
// least one positive entry per pooled block; zero-weight points inherit the
// value of the block they fall into.
std::vector<double> isotonic_fit(const std::vector<double>& y, const std::vector<double>& w);

}  // namespace twophase
