#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "cats/grid.hpp"

namespace cats {

class Node;
using NodePtr = std::shared_ptr<Node>;

// One recorded value in a reverse-mode computation graph. Nodes are created
// through the op functions below; the graph is a DAG of shared_ptr links from
// each node to its parents. Gradients accumulate when backward() runs on a
// scalar root.
class Node {
public:
    explicit Node(Grid value)
        : value(std::move(value)),
          grad(this->value.height(), this->value.width(), this->value.channels(), 0.0) {}

    Grid value;
    Grid grad;  // same shape as value
    std::vector<NodePtr> parents;
    // Pushes this node's grad into the parents' grads. Null for leaves.
    std::function<void(Node&)> backprop;
    bool backward_done = false;
};

// Creates a graph leaf. Parameters and constants are both leaves; whether the
// accumulated gradient is consumed is up to the caller.
NodePtr make_leaf(Grid value);

struct ConvSpec {
    int kh = 3;
    int kw = 3;
    int in_channels = 1;
    int out_channels = 1;
    bool zero_pad = true;  // false = valid convolution
};

// Cross-correlation. weights is kh x kw x (in_channels * out_channels) with
// channel index ic * out_channels + oc; bias is 1 x 1 x out_channels. Each
// output element accumulates bias first, then taps in kernel row-major order
// (ky, kx, ic ascending) so results are bit-reproducible.
NodePtr conv2d(const NodePtr& input, const NodePtr& weights, const NodePtr& bias,
               const ConvSpec& spec);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);  // Hadamard
NodePtr div(const NodePtr& num, const NodePtr& den);
NodePtr log(const NodePtr& x);  // rejects non-positive input
NodePtr negate(const NodePtr& x);
NodePtr one_minus(const NodePtr& x);
NodePtr clamp(const NodePtr& x, double lo, double hi);
NodePtr relu(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr scale(const NodePtr& x, double s);

// Per-pixel softmax across the channel axis, stabilized by max subtraction.
NodePtr channel_softmax(const NodePtr& x);

// Sum over the centered k x k window (k odd), clipped at image borders.
// Equivalent to zero-padded convolution with an all-ones kernel, evaluated
// separably (rows then columns).
NodePtr box_sum(const NodePtr& x, int k);

// 2x2 stride-2 max pooling; odd extents are padded by edge replication.
// Gradient routes to the argmax, ties broken to the first element in
// row-major window order.
NodePtr maxpool2(const NodePtr& x);

// Bilinear upsampling by an integer factor, half-pixel-center convention
// (align_corners = false) with border clamping.
NodePtr upsample_bilinear(const NodePtr& x, int factor);

NodePtr concat_channels(const std::vector<NodePtr>& xs);
NodePtr sum_channels(const NodePtr& x);  // H x W x C -> H x W x 1
// Multiplies channel c of x by w(0,0,c); w is 1 x 1 x C.
NodePtr channel_scale(const NodePtr& x, const NodePtr& w);

NodePtr sum_all(const NodePtr& x);  // -> 1 x 1 x 1

struct GatherCoord {
    int y = 0;
    int x = 0;
};

// Extracts single-channel values at the given pixel coordinates into an
// N x 1 x 1 node; the backward pass scatters gradients back.
NodePtr gather_pixels(const NodePtr& x, const std::vector<GatherCoord>& coords);

// Reverse-mode sweep from a scalar (1x1x1) root. A second call on the same
// root without reset_gradients() is rejected.
void backward(const NodePtr& root);

// Zeroes gradients and clears backward flags over the graph reachable from
// `root`.
void reset_gradients(const NodePtr& root);

// Plain box sum on a Grid (no graph); shared by forward and backward paths.
Grid box_sum_grid(const Grid& g, int k);

// Scoped recorder of how close any relu/clamp/maxpool input came to a point
// of non-differentiability during forward evaluation. Finite-difference test
// harnesses use it to reject instances that would sit on a kink.
class KinkMarginScope {
public:
    KinkMarginScope();
    ~KinkMarginScope();
    KinkMarginScope(const KinkMarginScope&) = delete;
    KinkMarginScope& operator=(const KinkMarginScope&) = delete;

    double min_margin() const { return min_margin_; }

    static void record(double margin);

private:
    KinkMarginScope* prev_;
    double min_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace cats
