#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cats/autodiff.hpp"

namespace cats {

struct GradCheckReport {
    std::string component;
    int checks = 0;
    double max_rel_err = 0.0;

    bool pass(double tol = 1e-5) const { return max_rel_err < tol; }
};

struct BuiltLoss {
    NodePtr loss;                  // scalar
    std::vector<NodePtr> tracked;  // leaves whose gradients are checked,
                                   // parallel to the builder's inputs
};

using LossBuilder = std::function<BuiltLoss(const std::vector<Grid>& inputs)>;

// Central finite differences of builder's scalar against the analytic
// gradients of every tracked element. Relative error uses
// |a - fd| / max(1, |a|, |fd|).
GradCheckReport fd_check(const std::string& component, std::vector<Grid> inputs,
                         const LossBuilder& builder, double h = 1e-4);

// Named component suites over random well-conditioned instances (instances
// are re-drawn while any relu/clamp/pool input sits within 1e-3 of a kink).
// Components: loss_ce, loss_bdry, loss_tex, tracing_loss, cofusion, edgenet.
const std::vector<std::string>& gradcheck_components();

GradCheckReport check_component(const std::string& component, std::uint64_t seed,
                                int size);

}  // namespace cats
