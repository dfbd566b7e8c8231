#include "cats/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "cats/edgenet.hpp"
#include "cats/rng.hpp"
#include "cats/tracing_loss.hpp"

namespace cats {

GradCheckReport fd_check(const std::string& component, std::vector<Grid> inputs,
                         const LossBuilder& builder, double h) {
    GradCheckReport report;
    report.component = component;

    BuiltLoss base = builder(inputs);
    if (base.loss->value.size() != 1) {
        throw std::invalid_argument("fd_check: builder must return a scalar loss");
    }
    if (base.tracked.size() != inputs.size()) {
        throw std::invalid_argument("fd_check: tracked leaf count must match inputs");
    }
    backward(base.loss);
    std::vector<Grid> analytic;
    analytic.reserve(base.tracked.size());
    for (const NodePtr& leaf : base.tracked) analytic.push_back(leaf->grad);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double original = inputs[i][j];
            inputs[i][j] = original + h;
            const double plus = builder(inputs).loss->value[0];
            inputs[i][j] = original - h;
            const double minus = builder(inputs).loss->value[0];
            inputs[i][j] = original;

            const double fd = (plus - minus) / (2.0 * h);
            const double a = analytic[i][j];
            const double rel =
                std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checks;
        }
    }
    return report;
}

namespace {

constexpr double kKinkMarginFloor = 1e-3;

Grid random_pred(Rng& rng, int size) {
    Grid pred(size, size, 1);
    for (double& v : pred.values()) v = rng.uniform(0.05, 0.95);
    return pred;
}

// Random multi-annotator-style consensus with quarter steps; density kept low
// so texture centers survive the buffer zone.
Grid random_consensus(Rng& rng, int size, double density) {
    Grid consensus(size, size, 1, 0.0);
    for (double& v : consensus.values()) {
        if (rng.uniform() < density) v = rng.uniform_int(1, 4) / 4.0;
    }
    return consensus;
}

EdgeLabel usable_label(Rng& rng, int size, bool need_positives, bool need_tex_centers) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        EdgeLabel label = derive_label(random_consensus(rng, size, 0.08), 0.25, 3);
        if (need_positives && label.positive_count == 0) continue;
        if (need_tex_centers) {
            bool has_center = false;
            for (std::size_t i = 0; i < label.consensus.size() && !has_center; ++i) {
                has_center = label.negative_mask[i] != 0.0 && label.buffer_mask[i] == 0.0;
            }
            if (!has_center) continue;
        }
        if (label.positive_count + label.negative_count == 0) continue;
        return label;
    }
    throw std::runtime_error("gradcheck: could not draw a usable label");
}

TracingConfig gradcheck_tracing_config() {
    TracingConfig cfg;
    cfg.lambda = 1.1;
    cfg.lambda1 = 2.0;
    cfg.lambda2 = 0.1;
    cfg.k_bdry = 3;
    cfg.k_tex = 3;
    return cfg;
}

Grid random_grid(Rng& rng, int h, int w, int c, double lo, double hi) {
    Grid g(h, w, c);
    for (double& v : g.values()) v = rng.uniform(lo, hi);
    return g;
}

GradCheckReport check_single_loss(const std::string& component, std::uint64_t seed,
                                  int size) {
    Rng rng = Rng(seed).split(17);
    const bool is_bdry = component == "loss_bdry";
    const bool is_tex = component == "loss_tex";
    const bool is_tracing = component == "tracing_loss";
    EdgeLabel label =
        usable_label(rng, size, is_bdry || is_tracing, is_tex || is_tracing);
    TracingConfig cfg = gradcheck_tracing_config();

    LossBuilder builder = [&, cfg](const std::vector<Grid>& inputs) {
        BuiltLoss built;
        NodePtr pred = make_leaf(inputs[0]);
        built.tracked = {pred};
        if (component == "loss_ce") {
            built.loss = loss_ce(pred, label, cfg.lambda, cfg.epsilon);
        } else if (component == "loss_bdry") {
            built.loss = loss_bdry(pred, label, cfg.k_bdry, cfg.epsilon);
        } else if (component == "loss_tex") {
            built.loss = loss_tex(pred, label, cfg.k_tex, cfg.epsilon);
        } else {
            built.loss = tracing_loss(pred, label, cfg).total;
        }
        return built;
    };

    // Re-draw the prediction until no clamp sits near its boundary.
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<Grid> inputs = {random_pred(rng, size)};
        double margin;
        {
            KinkMarginScope scope;
            builder(inputs);
            margin = scope.min_margin();
        }
        if (margin >= kKinkMarginFloor) {
            return fd_check(component, std::move(inputs), builder);
        }
    }
    throw std::runtime_error("gradcheck: could not draw a well-conditioned instance");
}

GradCheckReport check_cofusion(std::uint64_t seed, int size) {
    Rng rng = Rng(seed).split(23);
    const int sides = 3, hidden = 4;
    Grid probe = random_grid(rng, size, size, 1, -1.0, 1.0);

    LossBuilder builder = [&](const std::vector<Grid>& inputs) {
        BuiltLoss built;
        std::vector<NodePtr> side_nodes;
        for (int s = 0; s < sides; ++s) {
            side_nodes.push_back(make_leaf(inputs[s]));
        }
        CoFusionNodes params;
        params.conv1 = {ConvSpec{3, 3, sides, hidden, true}, make_leaf(inputs[3]),
                        make_leaf(inputs[4])};
        params.conv2 = {ConvSpec{3, 3, hidden, hidden, true}, make_leaf(inputs[5]),
                        make_leaf(inputs[6])};
        params.conv3 = {ConvSpec{3, 3, hidden, sides, true}, make_leaf(inputs[7]),
                        make_leaf(inputs[8])};
        built.tracked = side_nodes;
        built.tracked.insert(built.tracked.end(),
                             {params.conv1.weights, params.conv1.bias,
                              params.conv2.weights, params.conv2.bias,
                              params.conv3.weights, params.conv3.bias});
        CoFusionOutput out = cofusion_forward(side_nodes, params);
        built.loss = sum_all(mul(sigmoid(out.final_logit), make_leaf(probe)));
        return built;
    };

    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<Grid> inputs;
        for (int s = 0; s < sides; ++s) {
            inputs.push_back(random_grid(rng, size, size, 1, -1.0, 1.0));
        }
        inputs.push_back(random_grid(rng, 3, 3, sides * hidden, -0.5, 0.5));
        inputs.push_back(random_grid(rng, 1, 1, hidden, -0.2, 0.2));
        inputs.push_back(random_grid(rng, 3, 3, hidden * hidden, -0.5, 0.5));
        inputs.push_back(random_grid(rng, 1, 1, hidden, -0.2, 0.2));
        inputs.push_back(random_grid(rng, 3, 3, hidden * sides, -0.5, 0.5));
        inputs.push_back(random_grid(rng, 1, 1, sides, -0.2, 0.2));
        double margin;
        {
            KinkMarginScope scope;
            builder(inputs);
            margin = scope.min_margin();
        }
        if (margin >= kKinkMarginFloor) {
            return fd_check("cofusion", std::move(inputs), builder);
        }
    }
    throw std::runtime_error("gradcheck: could not draw a well-conditioned instance");
}

GradCheckReport check_edgenet(std::uint64_t seed, int size) {
    Rng rng = Rng(seed).split(31);
    EdgeNetConfig cfg;
    cfg.stages = 2;
    cfg.convs_per_stage = 1;
    cfg.base_channels = 4;
    cfg.cofusion_hidden = 4;
    cfg.fusion = FusionMode::kCoFusion;
    cfg.stage_loss.assign(cfg.stages, gradcheck_tracing_config());
    cfg.final_loss = gradcheck_tracing_config();

    EdgeLabel label = usable_label(rng, size, true, true);
    Grid image = random_grid(rng, size, size, 1, 0.05, 0.95);
    ModelState zero = make_zero_state(cfg);

    LossBuilder builder = [&, zero](const std::vector<Grid>& inputs) {
        ModelState state = zero;
        for (std::size_t i = 0; i < inputs.size(); ++i) state.params[i].value = inputs[i];
        EdgeNetForward fwd = edgenet_forward(image, state, cfg);
        BuiltLoss built;
        built.loss = edgenet_loss(fwd, label, cfg).total;
        built.tracked = fwd.leaves;
        return built;
    };

    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<Grid> inputs;
        for (const Param& p : zero.params) {
            inputs.push_back(random_grid(rng, p.value.height(), p.value.width(),
                                         p.value.channels(), -0.4, 0.4));
        }
        double margin;
        {
            KinkMarginScope scope;
            builder(inputs);
            margin = scope.min_margin();
        }
        if (margin >= kKinkMarginFloor) {
            return fd_check("edgenet", std::move(inputs), builder);
        }
    }
    throw std::runtime_error("gradcheck: could not draw a well-conditioned instance");
}

}  // namespace

const std::vector<std::string>& gradcheck_components() {
    static const std::vector<std::string> names = {
        "loss_ce", "loss_bdry", "loss_tex", "tracing_loss", "cofusion", "edgenet"};
    return names;
}

GradCheckReport check_component(const std::string& component, std::uint64_t seed,
                                int size) {
    if (size < 4) throw std::invalid_argument("check_component: size must be >= 4");
    if (component == "cofusion") return check_cofusion(seed, size);
    if (component == "edgenet") return check_edgenet(seed, size);
    for (const auto& name : gradcheck_components()) {
        if (component == name) return check_single_loss(component, seed, size);
    }
    throw std::invalid_argument("check_component: unknown component " + component);
}

}  // namespace cats
