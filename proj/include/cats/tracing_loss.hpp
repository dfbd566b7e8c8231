#pragma once

#include "cats/autodiff.hpp"
#include "cats/label.hpp"

namespace cats {

struct TracingConfig {
    double lambda = 1.0;   // positive/negative balance in the cross entropy
    double lambda1 = 0.0;  // weight of the boundary tracing term
    double lambda2 = 0.0;  // weight of the texture suppression term
    int k_bdry = 7;
    int k_tex = 3;
    double epsilon = 1e-10;  // clamp floor for every log argument and ratio

    void validate() const;
};

// Weighted cross entropy over the positive/negative sets; excluded pixels
// contribute nothing. pred holds post-sigmoid probabilities.
NodePtr loss_ce(const NodePtr& pred, const EdgeLabel& label, double lambda,
                double epsilon);

// Boundary tracing term: for each edge point, the negative log of the ratio
// between predicted mass on edge pixels of its k-box and total predicted mass
// of the box. Evaluated with two box-sum convolutions plus the mask product.
NodePtr loss_bdry(const NodePtr& pred, const EdgeLabel& label, int k_bdry,
                  double epsilon);

// Texture suppression term over centers with y == 0 outside the buffer zone;
// each contributes -log(1 - mean response of its clipped k-box).
NodePtr loss_tex(const NodePtr& pred, const EdgeLabel& label, int k_tex,
                 double epsilon);

struct TracingLossValues {
    double total = 0.0;
    double ce = 0.0;
    double bdry = 0.0;
    double tex = 0.0;
};

struct TracingLossNode {
    NodePtr total;
    TracingLossValues values;
};

// ce + lambda1 * bdry + lambda2 * tex as one differentiable scalar. Terms
// with zero weight are skipped entirely (their reported component value is 0).
TracingLossNode tracing_loss(const NodePtr& pred, const EdgeLabel& label,
                             const TracingConfig& cfg);

// Naive reference path: explicit per-pixel patch loops, no convolutions, no
// graph. Computes the same quantity as tracing_loss.
TracingLossValues loss_oracle(const Grid& pred, const EdgeLabel& label,
                              const TracingConfig& cfg);

}  // namespace cats
