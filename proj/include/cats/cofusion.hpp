#pragma once

#include <vector>

#include "cats/autodiff.hpp"

namespace cats {

// Parameter grids of one convolution layer. Weights are laid out
// kh x kw x (in_channels * out_channels); bias is 1 x 1 x out_channels.
struct Kernel {
    int kh = 3;
    int kw = 3;
    int in_channels = 1;
    int out_channels = 1;
    Grid weights;
    Grid bias;

    static Kernel zeros(int kh, int kw, int in_channels, int out_channels);
    ConvSpec spec(bool zero_pad = true) const {
        return ConvSpec{kh, kw, in_channels, out_channels, zero_pad};
    }
};

// Graph-side view of a Kernel whose grids were lifted into leaves.
struct KernelNodes {
    ConvSpec spec;
    NodePtr weights;
    NodePtr bias;
};

NodePtr apply_kernel(const NodePtr& input, const KernelNodes& k);

// The three 3x3 attention convolutions of the fusion block:
// L -> hidden -> hidden -> L channels, ReLU between layers.
struct CoFusionNodes {
    KernelNodes conv1;
    KernelNodes conv2;
    KernelNodes conv3;
};

struct CoFusionOutput {
    NodePtr final_logit;  // H x W x 1
    NodePtr weights;      // H x W x L per-pixel softmax weights
};

// Stacks the side logits, derives per-pixel per-side softmax weights from the
// attention stack, and returns the weighted sum of sides. The sigmoid over
// the fused logit is the caller's.
CoFusionOutput cofusion_forward(const std::vector<NodePtr>& sides,
                                const CoFusionNodes& params);

// Image-level weighted sum of side maps, one scalar weight per side; the
// fusion baseline. `weights` is a 1 x 1 x L leaf.
NodePtr fixed_weight_fusion(const std::vector<NodePtr>& sides, const NodePtr& weights);
NodePtr fixed_weight_fusion(const std::vector<NodePtr>& sides,
                            const std::vector<double>& weights);

}  // namespace cats
