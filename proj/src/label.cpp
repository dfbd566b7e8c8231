#include "cats/label.hpp"

#include <algorithm>
#include <stdexcept>

namespace cats {

double EdgeLabel::alpha() const {
    const long total = positive_count + negative_count;
    if (total == 0) {
        throw std::invalid_argument(
            "EdgeLabel::alpha: positive and negative sets are both empty");
    }
    return static_cast<double>(negative_count) / static_cast<double>(total);
}

EdgeLabel derive_label(const Grid& consensus, double delta, int k_bdry) {
    if (consensus.channels() != 1) {
        throw std::invalid_argument("derive_label: consensus must be single-channel");
    }
    if (delta < 0.0 || delta >= 1.0) {
        throw std::invalid_argument("derive_label: delta must lie in [0, 1)");
    }
    if (k_bdry <= 0 || k_bdry % 2 == 0) {
        throw std::invalid_argument("derive_label: k_bdry must be odd and positive");
    }
    if (consensus.min_value() < 0.0 || consensus.max_value() > 1.0) {
        throw std::invalid_argument("derive_label: consensus values must lie in [0, 1]");
    }

    const int h = consensus.height(), w = consensus.width();
    EdgeLabel label;
    label.consensus = consensus;
    label.delta = delta;
    label.k_bdry = k_bdry;
    label.positive_mask = Grid(h, w, 1, 0.0);
    label.negative_mask = Grid(h, w, 1, 0.0);
    label.excluded_mask = Grid(h, w, 1, 0.0);
    label.buffer_mask = Grid(h, w, 1, 0.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = consensus.at(y, x);
            if (v > delta) {
                label.positive_mask.at(y, x) = 1.0;
                label.edge_points.push_back({y, x});
                ++label.positive_count;
            } else if (v == 0.0) {
                label.negative_mask.at(y, x) = 1.0;
                ++label.negative_count;
            } else {
                label.excluded_mask.at(y, x) = 1.0;
            }
        }
    }

    const int r = k_bdry / 2;
    for (const auto& p : label.edge_points) {
        const int y_lo = std::max(0, p.y - r), y_hi = std::min(h - 1, p.y + r);
        const int x_lo = std::max(0, p.x - r), x_hi = std::min(w - 1, p.x + r);
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                label.buffer_mask.at(y, x) = 1.0;
            }
        }
    }
    return label;
}

}  // namespace cats
