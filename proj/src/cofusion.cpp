#include "cats/cofusion.hpp"

#include <stdexcept>
#include <string>

namespace cats {

Kernel Kernel::zeros(int kh, int kw, int in_channels, int out_channels) {
    Kernel k;
    k.kh = kh;
    k.kw = kw;
    k.in_channels = in_channels;
    k.out_channels = out_channels;
    k.weights = Grid(kh, kw, in_channels * out_channels, 0.0);
    k.bias = Grid(1, 1, out_channels, 0.0);
    return k;
}

NodePtr apply_kernel(const NodePtr& input, const KernelNodes& k) {
    return conv2d(input, k.weights, k.bias, k.spec);
}

namespace {

void require_sides(const std::vector<NodePtr>& sides, const char* op) {
    if (sides.empty()) {
        throw std::invalid_argument(std::string(op) + ": side list is empty");
    }
    for (const auto& s : sides) {
        if (s->value.channels() != 1 ||
            s->value.height() != sides[0]->value.height() ||
            s->value.width() != sides[0]->value.width()) {
            throw std::invalid_argument(std::string(op) +
                                        ": sides must all be H x W x 1 with equal shape");
        }
    }
}

}  // namespace

CoFusionOutput cofusion_forward(const std::vector<NodePtr>& sides,
                                const CoFusionNodes& params) {
    require_sides(sides, "cofusion_forward");
    const int side_count = static_cast<int>(sides.size());
    if (params.conv1.spec.in_channels != side_count ||
        params.conv3.spec.out_channels != side_count) {
        throw std::invalid_argument(
            "cofusion_forward: attention stack does not match side count " +
            std::to_string(side_count));
    }

    NodePtr stacked = concat_channels(sides);
    NodePtr scores = apply_kernel(
        relu(apply_kernel(relu(apply_kernel(stacked, params.conv1)), params.conv2)),
        params.conv3);
    NodePtr weights = channel_softmax(scores);
    CoFusionOutput out;
    out.weights = weights;
    out.final_logit = sum_channels(mul(weights, stacked));
    return out;
}

NodePtr fixed_weight_fusion(const std::vector<NodePtr>& sides, const NodePtr& weights) {
    require_sides(sides, "fixed_weight_fusion");
    if (weights->value.channels() != static_cast<int>(sides.size()) ||
        weights->value.height() != 1 || weights->value.width() != 1) {
        throw std::invalid_argument("fixed_weight_fusion: need one weight per side");
    }
    return sum_channels(channel_scale(concat_channels(sides), weights));
}

NodePtr fixed_weight_fusion(const std::vector<NodePtr>& sides,
                            const std::vector<double>& weights) {
    Grid w(1, 1, static_cast<int>(weights.size()));
    for (std::size_t i = 0; i < weights.size(); ++i) w[i] = weights[i];
    return fixed_weight_fusion(sides, make_leaf(std::move(w)));
}

}  // namespace cats
