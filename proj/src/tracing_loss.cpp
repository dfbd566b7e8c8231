#include "cats/tracing_loss.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cats {

namespace {

void require_valid_pred(const Grid& pred, const EdgeLabel& label, const char* op) {
    if (pred.channels() != 1 || pred.height() != label.consensus.height() ||
        pred.width() != label.consensus.width()) {
        throw std::invalid_argument(std::string(op) + ": prediction shape " +
                                    pred.shape_string() + " does not match label " +
                                    label.consensus.shape_string());
    }
    if (pred.min_value() < 0.0 || pred.max_value() > 1.0) {
        throw std::invalid_argument(std::string(op) +
                                    ": prediction values must lie in [0, 1]");
    }
}

Grid tex_center_mask(const EdgeLabel& label) {
    Grid mask = label.negative_mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (label.buffer_mask[i] != 0.0) mask[i] = 0.0;
    }
    return mask;
}

// Clipped box size |R_p| for every pixel.
Grid box_count_grid(int h, int w, int k) {
    const int r = k / 2;
    Grid counts(h, w, 1);
    for (int y = 0; y < h; ++y) {
        const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
        for (int x = 0; x < w; ++x) {
            const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
            counts.at(y, x) = static_cast<double>(ny) * nx;
        }
    }
    return counts;
}

NodePtr zero_scalar() { return make_leaf(Grid(1, 1, 1, 0.0)); }

}  // namespace

void TracingConfig::validate() const {
    if (lambda < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("TracingConfig: lambda weights must be >= 0");
    }
    if (k_bdry <= 0 || k_bdry % 2 == 0 || k_tex <= 0 || k_tex % 2 == 0) {
        throw std::invalid_argument("TracingConfig: patch sizes must be odd and positive");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("TracingConfig: epsilon must be > 0");
    }
}

NodePtr loss_ce(const NodePtr& pred, const EdgeLabel& label, double lambda,
                double epsilon) {
    require_valid_pred(pred->value, label, "loss_ce");
    const double a = label.alpha();  // throws when Y+ and Y- are both empty

    NodePtr pos_term =
        sum_all(mul(make_leaf(label.positive_mask), log(clamp(pred, epsilon, 1.0))));
    NodePtr neg_term = sum_all(
        mul(make_leaf(label.negative_mask), log(clamp(one_minus(pred), epsilon, 1.0))));
    return add(scale(pos_term, -lambda * a), scale(neg_term, -(1.0 - a)));
}

NodePtr loss_bdry(const NodePtr& pred, const EdgeLabel& label, int k_bdry,
                  double epsilon) {
    require_valid_pred(pred->value, label, "loss_bdry");
    if (k_bdry != label.k_bdry) {
        throw std::invalid_argument(
            "loss_bdry: k_bdry does not match the k used to derive the label buffer");
    }
    if (label.edge_points.empty()) return zero_scalar();

    std::vector<GatherCoord> centers;
    centers.reserve(label.edge_points.size());
    for (const auto& p : label.edge_points) centers.push_back({p.y, p.x});

    // Two box-sum convolutions, then a gather at the edge set.
    NodePtr edge_mass = box_sum(mul(pred, make_leaf(label.positive_mask)), k_bdry);
    NodePtr total_mass = box_sum(pred, k_bdry);
    NodePtr ratio =
        div(gather_pixels(edge_mass, centers),
            clamp(gather_pixels(total_mass, centers), epsilon,
                  std::numeric_limits<double>::infinity()));
    return scale(sum_all(log(clamp(ratio, epsilon, 1.0))), -1.0);
}

NodePtr loss_tex(const NodePtr& pred, const EdgeLabel& label, int k_tex,
                 double epsilon) {
    require_valid_pred(pred->value, label, "loss_tex");
    const Grid center_mask = tex_center_mask(label);
    std::vector<GatherCoord> centers;
    const int h = label.consensus.height(), w = label.consensus.width();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (center_mask.at(y, x) != 0.0) centers.push_back({y, x});
        }
    }
    if (centers.empty()) return zero_scalar();

    const Grid counts = box_count_grid(h, w, k_tex);
    Grid gathered_counts(static_cast<int>(centers.size()), 1, 1);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        gathered_counts[i] = counts.at(centers[i].y, centers[i].x);
    }
    NodePtr mean = div(gather_pixels(box_sum(pred, k_tex), centers),
                       make_leaf(std::move(gathered_counts)));
    return scale(sum_all(log(clamp(one_minus(mean), epsilon, 1.0))), -1.0);
}

TracingLossNode tracing_loss(const NodePtr& pred, const EdgeLabel& label,
                             const TracingConfig& cfg) {
    cfg.validate();
    TracingLossNode out;
    NodePtr total = loss_ce(pred, label, cfg.lambda, cfg.epsilon);
    out.values.ce = total->value[0];
    if (cfg.lambda1 > 0.0) {
        NodePtr bdry = loss_bdry(pred, label, cfg.k_bdry, cfg.epsilon);
        out.values.bdry = bdry->value[0];
        total = add(total, scale(bdry, cfg.lambda1));
    }
    if (cfg.lambda2 > 0.0) {
        NodePtr tex = loss_tex(pred, label, cfg.k_tex, cfg.epsilon);
        out.values.tex = tex->value[0];
        total = add(total, scale(tex, cfg.lambda2));
    }
    out.total = total;
    out.values.total = total->value[0];
    return out;
}

TracingLossValues loss_oracle(const Grid& pred, const EdgeLabel& label,
                              const TracingConfig& cfg) {
    cfg.validate();
    require_valid_pred(pred, label, "loss_oracle");
    const int h = pred.height(), w = pred.width();
    const double eps = cfg.epsilon;
    TracingLossValues out;

    // Cross entropy.
    const double a = label.alpha();
    double pos_sum = 0.0, neg_sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (label.positive_mask.at(y, x) != 0.0) {
                pos_sum += std::log(std::min(std::max(pred.at(y, x), eps), 1.0));
            } else if (label.negative_mask.at(y, x) != 0.0) {
                neg_sum += std::log(std::min(std::max(1.0 - pred.at(y, x), eps), 1.0));
            }
        }
    }
    out.ce = pos_sum * (-cfg.lambda * a) + neg_sum * (-(1.0 - a));
    out.total = out.ce;

    // Boundary tracing, per-patch loops.
    if (cfg.lambda1 > 0.0) {
        if (cfg.k_bdry != label.k_bdry) {
            throw std::invalid_argument(
                "loss_oracle: k_bdry does not match the label buffer");
        }
        const int r = cfg.k_bdry / 2;
        double sum = 0.0;
        for (const auto& p : label.edge_points) {
            double edge_mass = 0.0, total_mass = 0.0;
            const int y_lo = std::max(0, p.y - r), y_hi = std::min(h - 1, p.y + r);
            const int x_lo = std::max(0, p.x - r), x_hi = std::min(w - 1, p.x + r);
            for (int y = y_lo; y <= y_hi; ++y) {
                for (int x = x_lo; x <= x_hi; ++x) {
                    const double v = pred.at(y, x);
                    total_mass += v;
                    if (label.positive_mask.at(y, x) != 0.0) edge_mass += v;
                }
            }
            const double den = std::max(total_mass, eps);
            const double ratio = std::min(std::max(edge_mass / den, eps), 1.0);
            sum += std::log(ratio);
        }
        out.bdry = -sum;
        out.total += cfg.lambda1 * out.bdry;
    }

    // Texture suppression, per-patch loops.
    if (cfg.lambda2 > 0.0) {
        const int r = cfg.k_tex / 2;
        double sum = 0.0;
        for (int cy = 0; cy < h; ++cy) {
            for (int cx = 0; cx < w; ++cx) {
                if (label.negative_mask.at(cy, cx) == 0.0 ||
                    label.buffer_mask.at(cy, cx) != 0.0) {
                    continue;
                }
                double mass = 0.0;
                const int y_lo = std::max(0, cy - r), y_hi = std::min(h - 1, cy + r);
                const int x_lo = std::max(0, cx - r), x_hi = std::min(w - 1, cx + r);
                for (int y = y_lo; y <= y_hi; ++y) {
                    for (int x = x_lo; x <= x_hi; ++x) mass += pred.at(y, x);
                }
                const double count =
                    static_cast<double>(y_hi - y_lo + 1) * (x_hi - x_lo + 1);
                const double v = std::min(std::max(1.0 - mass / count, eps), 1.0);
                sum += std::log(v);
            }
        }
        out.tex = -sum;
        out.total += cfg.lambda2 * out.tex;
    }
    return out;
}

}  // namespace cats
