#pragma once

#include <utility>
#include <vector>

#include "cats/grid.hpp"

namespace cats {

struct PixelCoord {
    int y = 0;
    int x = 0;
    bool operator==(const PixelCoord&) const = default;
};

// Per-pixel annotation consensus y in [0,1] and the sample sets derived from
// it: positives (y > delta), negatives (y == 0), the excluded controversial
// band (0 < y <= delta), the edge point list E, and the buffer zone (box
// dilation of E by k_bdry).
struct EdgeLabel {
    Grid consensus;  // H x W x 1
    double delta = 0.0;
    int k_bdry = 7;

    Grid positive_mask;  // 1 where y > delta
    Grid negative_mask;  // 1 where y == 0
    Grid excluded_mask;  // 1 where 0 < y <= delta
    Grid buffer_mask;    // dilation of positives by the k_bdry box
    std::vector<PixelCoord> edge_points;  // positives in row-major order

    long positive_count = 0;
    long negative_count = 0;

    // Proportion of negatives among positives + negatives. Throws when both
    // sets are empty.
    double alpha() const;
};

EdgeLabel derive_label(const Grid& consensus, double delta, int k_bdry);

}  // namespace cats
