#pragma once

#include <vector>

#include "cats/label.hpp"

namespace cats {

struct MatchResult {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    // Matched ground-truth index per prediction pixel, -1 if unmatched.
    std::vector<int> pred_to_gt;
};

// Maximum-cardinality one-to-one matching between prediction and ground-truth
// pixels over pairs with Euclidean distance <= radius, found by augmenting
// paths. TP = matched pairs, FP = unmatched predictions, FN = unmatched
// ground truth.
MatchResult correspond(const std::vector<PixelCoord>& pred,
                       const std::vector<PixelCoord>& gt, double radius);

}  // namespace cats
