#include <doctest.h>

#include <cmath>

#include "cats/cofusion.hpp"
#include "cats/gradcheck.hpp"
#include "cats/rng.hpp"

using namespace cats;

namespace {

Grid random_grid(Rng& rng, int h, int w, int c, double lo, double hi) {
    Grid g(h, w, c);
    for (double& v : g.values()) v = rng.uniform(lo, hi);
    return g;
}

CoFusionNodes zero_params(int sides, int hidden) {
    CoFusionNodes p;
    p.conv1 = {ConvSpec{3, 3, sides, hidden, true},
               make_leaf(Grid(3, 3, sides * hidden, 0.0)),
               make_leaf(Grid(1, 1, hidden, 0.0))};
    p.conv2 = {ConvSpec{3, 3, hidden, hidden, true},
               make_leaf(Grid(3, 3, hidden * hidden, 0.0)),
               make_leaf(Grid(1, 1, hidden, 0.0))};
    p.conv3 = {ConvSpec{3, 3, hidden, sides, true},
               make_leaf(Grid(3, 3, hidden * sides, 0.0)),
               make_leaf(Grid(1, 1, sides, 0.0))};
    return p;
}

CoFusionNodes random_params(Rng& rng, int sides, int hidden) {
    CoFusionNodes p;
    p.conv1 = {ConvSpec{3, 3, sides, hidden, true},
               make_leaf(random_grid(rng, 3, 3, sides * hidden, -0.5, 0.5)),
               make_leaf(random_grid(rng, 1, 1, hidden, -0.2, 0.2))};
    p.conv2 = {ConvSpec{3, 3, hidden, hidden, true},
               make_leaf(random_grid(rng, 3, 3, hidden * hidden, -0.5, 0.5)),
               make_leaf(random_grid(rng, 1, 1, hidden, -0.2, 0.2))};
    p.conv3 = {ConvSpec{3, 3, hidden, sides, true},
               make_leaf(random_grid(rng, 3, 3, hidden * sides, -0.5, 0.5)),
               make_leaf(random_grid(rng, 1, 1, sides, -0.2, 0.2))};
    return p;
}

std::vector<NodePtr> random_sides(Rng& rng, int count, int size) {
    std::vector<NodePtr> sides;
    for (int s = 0; s < count; ++s) {
        sides.push_back(make_leaf(random_grid(rng, size, size, 1, -2.0, 2.0)));
    }
    return sides;
}

}  // namespace

TEST_SUITE("cofusion") {

TEST_CASE("zero parameters give uniform weights and the side mean") {
    Rng rng(1);
    auto sides = random_sides(rng, 4, 6);
    CoFusionOutput out = cofusion_forward(sides, zero_params(4, 8));
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            double mean = 0.0;
            for (int l = 0; l < 4; ++l) {
                CHECK(out.weights->value.at(y, x, l) == doctest::Approx(0.25));
                mean += sides[l]->value.at(y, x) / 4.0;
            }
            CHECK(out.final_logit->value.at(y, x) == doctest::Approx(mean));
        }
    }
}

TEST_CASE("hand-set scores (0, ln 2) weight the sides 1/3 and 2/3") {
    Rng rng(2);
    auto sides = random_sides(rng, 2, 5);
    CoFusionNodes params = zero_params(2, 4);
    Grid bias(1, 1, 2, 0.0);
    bias[1] = std::log(2.0);
    params.conv3.bias = make_leaf(bias);

    CoFusionOutput out = cofusion_forward(sides, params);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
            CHECK(out.weights->value.at(y, x, 0) == doctest::Approx(1.0 / 3.0));
            CHECK(out.weights->value.at(y, x, 1) == doctest::Approx(2.0 / 3.0));
            const double expected =
                (sides[0]->value.at(y, x) + 2.0 * sides[1]->value.at(y, x)) / 3.0;
            CHECK(out.final_logit->value.at(y, x) == doctest::Approx(expected));
        }
    }
}

TEST_CASE("gradients through the block match finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        GradCheckReport report = check_component("cofusion", seed, 6);
        INFO("seed ", seed, " err ", report.max_rel_err);
        CHECK(report.pass(1e-5));
    }
}

TEST_CASE("per-pixel weights sum to one and fused logits stay convex") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const int count = rng.uniform_int(1, 5);
        auto sides = random_sides(rng, count, 8);
        CoFusionOutput out = cofusion_forward(sides, random_params(rng, count, 6));
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                double sum = 0.0, lo = 1e300, hi = -1e300;
                for (int l = 0; l < count; ++l) {
                    sum += out.weights->value.at(y, x, l);
                    lo = std::min(lo, sides[l]->value.at(y, x));
                    hi = std::max(hi, sides[l]->value.at(y, x));
                }
                CHECK(std::abs(sum - 1.0) <= 1e-9);
                CHECK(out.final_logit->value.at(y, x) >= lo - 1e-12);
                CHECK(out.final_logit->value.at(y, x) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("adding a constant to every attention channel leaves weights unchanged") {
    Rng rng(11);
    auto sides = random_sides(rng, 3, 6);
    CoFusionNodes params = random_params(rng, 3, 4);
    CoFusionOutput base = cofusion_forward(sides, params);

    Grid shifted_bias = params.conv3.bias->value;
    for (double& v : shifted_bias.values()) v += 1.7;
    params.conv3.bias = make_leaf(shifted_bias);
    CoFusionOutput shifted = cofusion_forward(sides, params);
    for (std::size_t i = 0; i < base.weights->value.size(); ++i) {
        CHECK(base.weights->value[i] ==
              doctest::Approx(shifted.weights->value[i]).epsilon(1e-12));
    }
}

TEST_CASE("single side passes through unchanged") {
    Rng rng(13);
    auto sides = random_sides(rng, 1, 7);
    CoFusionOutput out = cofusion_forward(sides, random_params(rng, 1, 4));
    for (std::size_t i = 0; i < sides[0]->value.size(); ++i) {
        CHECK(out.final_logit->value[i] == doctest::Approx(sides[0]->value[i]));
        CHECK(out.weights->value[i] == doctest::Approx(1.0));
    }
}

TEST_CASE("fixed fusion: one-hot selects a side, averaging averages") {
    Rng rng(17);
    auto sides = random_sides(rng, 2, 4);
    NodePtr selected = fixed_weight_fusion(sides, std::vector<double>{1.0, 0.0});
    for (std::size_t i = 0; i < selected->value.size(); ++i) {
        CHECK(selected->value[i] == sides[0]->value[i]);
    }

    std::vector<NodePtr> constant_sides = {make_leaf(Grid(3, 3, 1, 1.0)),
                                           make_leaf(Grid(3, 3, 1, 3.0))};
    NodePtr averaged = fixed_weight_fusion(constant_sides, std::vector<double>{0.5, 0.5});
    for (double v : averaged->value.values()) CHECK(v == doctest::Approx(2.0));

    CHECK_THROWS_AS(fixed_weight_fusion(sides, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("equal fixed weights reproduce the zero-parameter CoFusion output") {
    Rng rng(19);
    auto sides = random_sides(rng, 3, 5);
    NodePtr fixed = fixed_weight_fusion(sides, std::vector<double>(3, 1.0 / 3.0));
    CoFusionOutput cofused = cofusion_forward(sides, zero_params(3, 4));
    for (std::size_t i = 0; i < fixed->value.size(); ++i) {
        CHECK(fixed->value[i] == doctest::Approx(cofused.final_logit->value[i]));
    }
}

TEST_CASE("channel mismatch is rejected") {
    Rng rng(23);
    auto sides = random_sides(rng, 3, 4);
    CHECK_THROWS_AS(cofusion_forward(sides, zero_params(2, 4)), std::invalid_argument);
}

}  // TEST_SUITE
