#include "cats/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cats {

namespace {

// Adjacency of `left` pixels to `right` pixels within `radius`, built through
// a uniform bucket grid over the right side.
std::vector<std::vector<int>> build_adjacency(const std::vector<PixelCoord>& left,
                                              const std::vector<PixelCoord>& right,
                                              double radius) {
    const int cell = std::max(1, static_cast<int>(std::ceil(radius)));
    std::unordered_map<long, std::vector<int>> buckets;
    buckets.reserve(right.size() * 2 + 1);
    auto key = [](int by, int bx) {
        return static_cast<long>(by) * (1L << 21) + bx;
    };
    for (std::size_t i = 0; i < right.size(); ++i) {
        buckets[key(right[i].y / cell, right[i].x / cell)].push_back(static_cast<int>(i));
    }
    const double r2 = radius * radius + 1e-9;
    std::vector<std::vector<int>> adjacency(left.size());
    for (std::size_t i = 0; i < left.size(); ++i) {
        auto& neighbors = adjacency[i];
        const int cy = left[i].y / cell, cx = left[i].x / cell;
        for (int by = cy - 1; by <= cy + 1; ++by) {
            for (int bx = cx - 1; bx <= cx + 1; ++bx) {
                auto it = buckets.find(key(by, bx));
                if (it == buckets.end()) continue;
                for (int j : it->second) {
                    const double dy = left[i].y - right[j].y;
                    const double dx = left[i].x - right[j].x;
                    if (dy * dy + dx * dx <= r2) neighbors.push_back(j);
                }
            }
        }
        std::sort(neighbors.begin(), neighbors.end());
    }
    return adjacency;
}

struct Kuhn {
    const std::vector<std::vector<int>>& adjacency;
    std::vector<int> match_left;   // right index per left node, -1 if none
    std::vector<int> match_right;  // left index per right node, -1 if none
    std::vector<int> visited;
    int stamp = 0;

    Kuhn(const std::vector<std::vector<int>>& adj, std::size_t n_right)
        : adjacency(adj),
          match_left(adj.size(), -1),
          match_right(n_right, -1),
          visited(adj.size(), -1) {}

    bool augment(int u) {
        visited[u] = stamp;
        for (int v : adjacency[u]) {
            if (match_right[v] == -1) {
                match_left[u] = v;
                match_right[v] = u;
                return true;
            }
        }
        for (int v : adjacency[u]) {
            const int w = match_right[v];
            if (visited[w] != stamp && augment(w)) {
                match_left[u] = v;
                match_right[v] = u;
                return true;
            }
        }
        return false;
    }

    long solve() {
        long matched = 0;
        for (std::size_t u = 0; u < adjacency.size(); ++u) {
            if (match_left[u] == -1) {
                ++stamp;
                if (augment(static_cast<int>(u))) ++matched;
            }
        }
        return matched;
    }
};

}  // namespace

MatchResult correspond(const std::vector<PixelCoord>& pred,
                       const std::vector<PixelCoord>& gt, double radius) {
    if (!(radius > 0.0)) {
        throw std::invalid_argument("correspond: radius must be positive");
    }
    MatchResult result;
    result.pred_to_gt.assign(pred.size(), -1);
    if (pred.empty() || gt.empty()) {
        result.fp = static_cast<long>(pred.size());
        result.fn = static_cast<long>(gt.size());
        return result;
    }

    // Augment from the smaller side; the matching cardinality is the same.
    const bool pred_is_left = pred.size() <= gt.size();
    const auto& left = pred_is_left ? pred : gt;
    const auto& right = pred_is_left ? gt : pred;
    auto adjacency = build_adjacency(left, right, radius);
    Kuhn kuhn(adjacency, right.size());
    result.tp = kuhn.solve();
    result.fp = static_cast<long>(pred.size()) - result.tp;
    result.fn = static_cast<long>(gt.size()) - result.tp;
    if (pred_is_left) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            result.pred_to_gt[i] = kuhn.match_left[i];
        }
    } else {
        for (std::size_t j = 0; j < pred.size(); ++j) {
            result.pred_to_gt[j] = kuhn.match_right[j];
        }
    }
    return result;
}

}  // namespace cats
