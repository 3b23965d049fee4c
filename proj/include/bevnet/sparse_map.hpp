#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "bevnet/tape.hpp"

namespace bevnet {

// 2D sparse feature map: a sorted set of active (i,j) cells whose features
// live as the rows of one tape tensor, in active-set order.
struct SparseMap {
    int rows = 0;
    int cols = 0;
    std::vector<std::pair<int, int>> active;  // unique, lexicographically sorted
    TensorRef feat;

    // Active-row index of (i,j), or -1.
    int find(int i, int j) const {
        auto it = std::lower_bound(active.begin(), active.end(), std::make_pair(i, j));
        if (it == active.end() || *it != std::make_pair(i, j)) return -1;
        return static_cast<int>(it - active.begin());
    }
    int count() const { return static_cast<int>(active.size()); }
    bool in_bounds(int i, int j) const { return i >= 0 && i < rows && j >= 0 && j < cols; }

    void check_active_invariant() const;
};

}  // namespace bevnet
