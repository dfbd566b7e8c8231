#include <doctest.h>

#include <cmath>

#include "cats/autodiff.hpp"
#include "cats/gradcheck.hpp"
#include "cats/rng.hpp"

using namespace cats;

namespace {

Grid random_grid(Rng& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
    Grid g(h, w, c);
    for (double& v : g.values()) v = rng.uniform(lo, hi);
    return g;
}

// Quadruple-loop reference convolution with the documented accumulation
// order: bias first, then taps ascending in (ky, kx, ic).
Grid conv_reference(const Grid& in, const Grid& w, const Grid& b, const ConvSpec& s) {
    const int pad_y = s.zero_pad ? (s.kh - 1) / 2 : 0;
    const int pad_x = s.zero_pad ? (s.kw - 1) / 2 : 0;
    const int oh = s.zero_pad ? in.height() : in.height() - s.kh + 1;
    const int ow = s.zero_pad ? in.width() : in.width() - s.kw + 1;
    Grid out(oh, ow, s.out_channels);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int oc = 0; oc < s.out_channels; ++oc) {
                double acc = b.at(0, 0, oc);
                for (int ky = 0; ky < s.kh; ++ky) {
                    for (int kx = 0; kx < s.kw; ++kx) {
                        const int iy = y + ky - pad_y, ix = x + kx - pad_x;
                        if (iy < 0 || iy >= in.height() || ix < 0 || ix >= in.width()) {
                            continue;
                        }
                        for (int ic = 0; ic < s.in_channels; ++ic) {
                            acc += in.at(iy, ix, ic) *
                                   w.at(ky, kx, ic * s.out_channels + oc);
                        }
                    }
                }
                out.at(y, x, oc) = acc;
            }
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("grid-autodiff") {

TEST_CASE("grid rejects bad dimensions and non-finite values") {
    CHECK_THROWS_AS(Grid(0, 3, 1), std::invalid_argument);
    Grid g(2, 2, 1, 1.0);
    g.at(1, 1) = std::nan("");
    CHECK_FALSE(g.all_finite());
    CHECK_THROWS_AS(make_leaf(g), std::invalid_argument);
}

TEST_CASE("conv2d with 1x1 identity kernel returns its input") {
    Rng rng(3);
    Grid in = random_grid(rng, 3, 3, 1);
    Grid w(1, 1, 1, 1.0);
    Grid b(1, 1, 1, 0.0);
    NodePtr out = conv2d(make_leaf(in), make_leaf(w), make_leaf(b),
                         ConvSpec{1, 1, 1, 1, true});
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(out->value[i] == in[i]);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones input counts the clipped window") {
    Grid in(3, 3, 1, 1.0);
    Grid w(3, 3, 1, 1.0);
    Grid b(1, 1, 1, 0.0);
    NodePtr out = conv2d(make_leaf(in), make_leaf(w), make_leaf(b),
                         ConvSpec{3, 3, 1, 1, true});
    CHECK(out->value.at(1, 1) == doctest::Approx(9.0));
    CHECK(out->value.at(0, 0) == doctest::Approx(4.0));
    CHECK(out->value.at(0, 2) == doctest::Approx(4.0));
    CHECK(out->value.at(2, 0) == doctest::Approx(4.0));
    CHECK(out->value.at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d matches the quadruple-loop reference bit for bit") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
        const int k = 2 * rng.uniform_int(0, 2) + 1;
        const bool pad = rng.uniform_int(0, 1) == 1;
        const int h = rng.uniform_int(k, 7), w = rng.uniform_int(k, 7);
        ConvSpec spec{k, k, ci, co, pad};
        Grid in = random_grid(rng, h, w, ci);
        Grid wt = random_grid(rng, k, k, ci * co);
        Grid bias = random_grid(rng, 1, 1, co);
        NodePtr out = conv2d(make_leaf(in), make_leaf(wt), make_leaf(bias), spec);
        Grid ref = conv_reference(in, wt, bias, spec);
        REQUIRE(out->value.same_shape(ref));
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out->value[i] == ref[i]);
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    Grid in(3, 3, 2, 1.0);
    Grid w(3, 3, 1, 1.0);
    Grid b(1, 1, 1, 0.0);
    CHECK_THROWS_WITH_AS(conv2d(make_leaf(in), make_leaf(w), make_leaf(b),
                                ConvSpec{3, 3, 1, 1, true}),
                         doctest::Contains("channels"), std::invalid_argument);
}

TEST_CASE("elementwise examples") {
    Grid zero(1, 1, 1, 0.0);
    CHECK(sigmoid(make_leaf(zero))->value[0] == doctest::Approx(0.5));

    Grid a = Grid::from_rows(1, 2, {1.0, 2.0});
    Grid b = Grid::from_rows(1, 2, {3.0, 4.0});
    NodePtr prod = mul(make_leaf(a), make_leaf(b));
    CHECK(prod->value[0] == doctest::Approx(3.0));
    CHECK(prod->value[1] == doctest::Approx(8.0));

    Grid x = Grid::from_rows(1, 2, {-1.0, 1.0});
    NodePtr r = relu(make_leaf(x));
    NodePtr total = sum_all(r);
    backward(total);
    CHECK(r->parents[0]->grad[0] == doctest::Approx(0.0));
    CHECK(r->parents[0]->grad[1] == doctest::Approx(1.0));
}

TEST_CASE("log rejects non-positive input") {
    Grid g = Grid::from_rows(1, 2, {0.5, 0.0});
    CHECK_THROWS_AS(log(make_leaf(g)), std::invalid_argument);
}

TEST_CASE("clamp zeroes gradient outside the band") {
    Grid x = Grid::from_rows(1, 3, {-0.5, 0.5, 1.5});
    NodePtr leaf = make_leaf(x);
    backward(sum_all(clamp(leaf, 0.0, 1.0)));
    CHECK(leaf->grad[0] == 0.0);
    CHECK(leaf->grad[1] == 1.0);
    CHECK(leaf->grad[2] == 0.0);
}

TEST_CASE("channel softmax: symmetry, closed form, normalization, shift invariance") {
    Grid equal(2, 2, 4, 1.25);
    NodePtr w = channel_softmax(make_leaf(equal));
    for (std::size_t i = 0; i < w->value.size(); ++i) {
        CHECK(w->value[i] == doctest::Approx(0.25));
    }

    Grid scores(1, 1, 2);
    scores.at(0, 0, 0) = 0.0;
    scores.at(0, 0, 1) = std::log(2.0);
    NodePtr w2 = channel_softmax(make_leaf(scores));
    CHECK(w2->value[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(w2->value[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    Rng rng(5);
    Grid any = random_grid(rng, 4, 4, 5, -3.0, 3.0);
    NodePtr w3 = channel_softmax(make_leaf(any));
    Grid shifted = any;
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const double c = rng.uniform(-2.0, 2.0);
            for (int l = 0; l < 5; ++l) shifted.at(y, x, l) += c;
        }
    }
    NodePtr w4 = channel_softmax(make_leaf(shifted));
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            double sum = 0.0;
            for (int l = 0; l < 5; ++l) {
                sum += w3->value.at(y, x, l);
                CHECK(w3->value.at(y, x, l) ==
                      doctest::Approx(w4->value.at(y, x, l)).epsilon(1e-12));
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("maxpool2 examples") {
    Grid constant(4, 4, 1, 0.7);
    NodePtr pooled = maxpool2(make_leaf(constant));
    CHECK(pooled->value.height() == 2);
    for (double v : pooled->value.values()) CHECK(v == doctest::Approx(0.7));

    Grid g = Grid::from_rows(2, 2, {1.0, 2.0, 3.0, 4.0});
    NodePtr p = maxpool2(make_leaf(g));
    CHECK(p->value.size() == 1);
    CHECK(p->value[0] == doctest::Approx(4.0));

    // Tie-break to the first element in row-major window order.
    Grid tie(2, 2, 1, 1.0);
    NodePtr leaf = make_leaf(tie);
    backward(sum_all(maxpool2(leaf)));
    CHECK(leaf->grad[0] == 1.0);
    CHECK(leaf->grad[1] == 0.0);
    CHECK(leaf->grad[2] == 0.0);
    CHECK(leaf->grad[3] == 0.0);
}

TEST_CASE("maxpool2 pads odd extents by replication") {
    Grid g = Grid::from_rows(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    NodePtr p = maxpool2(make_leaf(g));
    REQUIRE(p->value.height() == 2);
    REQUIRE(p->value.width() == 2);
    CHECK(p->value.at(0, 0) == 5.0);
    CHECK(p->value.at(0, 1) == 6.0);
    CHECK(p->value.at(1, 0) == 8.0);
    CHECK(p->value.at(1, 1) == 9.0);
}

TEST_CASE("upsample of a 1x1 grid by factor 4 is constant") {
    Grid g(1, 1, 1, 0.37);
    NodePtr up = upsample_bilinear(make_leaf(g), 4);
    REQUIRE(up->value.height() == 4);
    REQUIRE(up->value.width() == 4);
    for (double v : up->value.values()) CHECK(v == doctest::Approx(0.37));
}

TEST_CASE("sum_all and backward basics") {
    Grid g = Grid::from_rows(2, 2, {1, 2, 3, 4});
    NodePtr leaf = make_leaf(g);
    NodePtr total = sum_all(leaf);
    CHECK(total->value[0] == doctest::Approx(10.0));
    backward(total);
    for (double v : leaf->grad.values()) CHECK(v == doctest::Approx(1.0));

    Grid x(1, 1, 1, 2.0);
    NodePtr xl = make_leaf(x);
    backward(sum_all(mul(xl, xl)));
    CHECK(xl->grad[0] == doctest::Approx(4.0));
}

TEST_CASE("backward contract: scalar roots only, no repeat without reset") {
    Grid g(2, 2, 1, 1.0);
    NodePtr leaf = make_leaf(g);
    CHECK_THROWS_AS(backward(leaf), std::invalid_argument);
    NodePtr total = sum_all(leaf);
    backward(total);
    CHECK_THROWS_AS(backward(total), std::logic_error);
    reset_gradients(total);
    CHECK(leaf->grad[0] == 0.0);
    backward(total);
    CHECK(leaf->grad[0] == 1.0);
}

TEST_CASE("graph evaluation is deterministic for a fixed seed") {
    auto run = [] {
        Rng rng(77);
        Grid in = random_grid(rng, 6, 6, 2);
        Grid w = random_grid(rng, 3, 3, 2 * 3);
        Grid b = random_grid(rng, 1, 1, 3);
        NodePtr out = sigmoid(conv2d(make_leaf(in), make_leaf(w), make_leaf(b),
                                     ConvSpec{3, 3, 2, 3, true}));
        NodePtr total = sum_all(out);
        backward(total);
        return std::make_pair(total->value[0], out->parents[0]->parents[0]->grad[0]);
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("every differentiable op passes finite-difference checks") {
    // One composite graph per seed touching every op; gradients checked at
    // the leaves. Instances are re-drawn when a kink is too close.
    int seeds_checked = 0;
    for (std::uint64_t seed = 1; seeds_checked < 100; ++seed) {
        Rng rng(seed);
        const int h = rng.uniform_int(2, 4) * 2, w = rng.uniform_int(2, 4) * 2;
        const int ci = rng.uniform_int(1, 2), co = rng.uniform_int(1, 3);
        Grid in = random_grid(rng, h, w, ci, 0.1, 0.9);
        Grid wt = random_grid(rng, 3, 3, ci * co, -0.6, 0.6);
        Grid bias = random_grid(rng, 1, 1, co, -0.2, 0.2);
        Grid scale_w = random_grid(rng, 1, 1, co, -1.0, 1.0);
        Grid other = random_grid(rng, h, w, 1, 0.1, 0.9);

        LossBuilder builder = [&](const std::vector<Grid>& inputs) {
            BuiltLoss built;
            NodePtr a = make_leaf(inputs[0]);
            NodePtr b = make_leaf(inputs[1]);
            NodePtr weights = make_leaf(inputs[2]);
            NodePtr bias_node = make_leaf(inputs[3]);
            NodePtr cw = make_leaf(inputs[4]);
            built.tracked = {a, b, weights, bias_node, cw};

            NodePtr conv = conv2d(a, weights, bias_node, ConvSpec{3, 3, ci, co, true});
            NodePtr attn = channel_softmax(conv);
            NodePtr scaled = channel_scale(relu(conv), cw);
            NodePtr mixed = sum_channels(add(attn, scaled));
            NodePtr pooled = maxpool2(mixed);
            NodePtr up = upsample_bilinear(pooled, 2);
            NodePtr safe = clamp(sigmoid(up), 1e-6, 1.0 - 1e-6);
            NodePtr logs = log(div(safe, one_minus(safe)));
            NodePtr combined = add(mul(b, negate(logs)), scale(box_sum(b, 3), 0.25));
            built.loss = sum_all(combined);
            return built;
        };

        std::vector<Grid> inputs = {in, other, wt, bias, scale_w};
        double margin;
        {
            KinkMarginScope scope;
            builder(inputs);
            margin = scope.min_margin();
        }
        if (margin < 1e-3) continue;
        GradCheckReport report = fd_check("ops", std::move(inputs), builder);
        CHECK(report.max_rel_err < 1e-5);
        ++seeds_checked;
    }
}

}  // TEST_SUITE
