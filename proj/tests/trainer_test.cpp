#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cats/rng.hpp"
#include "cats/synth.hpp"
#include "cats/trainer.hpp"

using namespace cats;

namespace {

EdgeNetConfig tiny_net(FusionMode fusion = FusionMode::kFixed) {
    EdgeNetConfig cfg;
    cfg.stages = 2;
    cfg.convs_per_stage = 1;
    cfg.base_channels = 4;
    cfg.cofusion_hidden = 4;
    cfg.fusion = fusion;
    TracingConfig loss;
    loss.lambda = 1.1;
    loss.lambda1 = 1.0;
    loss.lambda2 = 0.05;
    loss.k_bdry = 3;
    loss.k_tex = 3;
    cfg.stage_loss.assign(2, loss);
    cfg.final_loss = loss;
    return cfg;
}

std::vector<Sample> tiny_dataset(int count, double delta, std::uint64_t seed) {
    SynthSpec spec;
    spec.image_size = 16;
    spec.num_images = count;
    spec.min_shapes = 1;
    spec.max_shapes = 1;
    spec.seed = seed;
    std::vector<Sample> dataset;
    for (auto& s : generate(spec)) {
        EdgeLabel label = derive_label(s.consensus, delta, 3);
        dataset.push_back({std::move(s.image), std::move(label)});
    }
    return dataset;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning rate follows the exact step schedule") {
    TrainConfig cfg;
    cfg.lr0 = 1e-6;
    cfg.lr_drop_period = 20;
    cfg.lr_drop_factor = 0.1;
    CHECK(learning_rate(cfg, 0) == 1e-6);
    CHECK(learning_rate(cfg, 19) == 1e-6);
    CHECK(learning_rate(cfg, 20) == doctest::Approx(1e-7).epsilon(1e-12));
    CHECK(learning_rate(cfg, 25) == doctest::Approx(1e-7).epsilon(1e-12));
    CHECK(learning_rate(cfg, 40) == doctest::Approx(1e-8).epsilon(1e-12));
    for (int e = 0; e < 60; ++e) {
        const int drops = e / cfg.lr_drop_period;
        double expected = cfg.lr0;
        for (int i = 0; i < drops; ++i) expected *= cfg.lr_drop_factor;
        CHECK(learning_rate(cfg, e) == expected);
    }
}

TEST_CASE("sgd_step: zero gradient and zero decay leave parameters unchanged") {
    EdgeNetConfig net = tiny_net();
    ModelState state = init_params(net, 1);
    ModelState before = state;
    std::vector<Grid> zeros;
    for (const Param& p : state.params) {
        zeros.emplace_back(p.value.height(), p.value.width(), p.value.channels(), 0.0);
    }
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    sgd_step(state, zeros, cfg, 0);
    for (std::size_t p = 0; p < state.params.size(); ++p) {
        for (std::size_t i = 0; i < state.params[p].value.size(); ++i) {
            CHECK(state.params[p].value[i] == before.params[p].value[i]);
        }
    }
}

TEST_CASE("sgd_step reproduces the hand momentum recurrence") {
    EdgeNetConfig net = tiny_net();
    net.stages = 1;
    net.stage_loss.resize(1);
    ModelState state = make_zero_state(net);
    for (Param& p : state.params) p.value.fill(1.0);

    std::vector<Grid> grads;
    for (const Param& p : state.params) {
        grads.emplace_back(p.value.height(), p.value.width(), p.value.channels(), 0.5);
    }
    TrainConfig cfg;
    cfg.lr0 = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    sgd_step(state, grads, cfg, 0);
    CHECK(state.params[0].momentum[0] == doctest::Approx(0.5));
    CHECK(state.params[0].value[0] == doctest::Approx(0.95));
    sgd_step(state, grads, cfg, 0);
    CHECK(state.params[0].momentum[0] == doctest::Approx(0.95));
    CHECK(state.params[0].value[0] == doctest::Approx(0.855));
}

TEST_CASE("momentum-free, decay-free step is vanilla gradient descent to the bit") {
    EdgeNetConfig net = tiny_net();
    ModelState state = init_params(net, 5);
    ModelState reference = state;
    Rng rng(6);
    std::vector<Grid> grads;
    for (const Param& p : state.params) {
        Grid g(p.value.height(), p.value.width(), p.value.channels());
        for (double& v : g.values()) v = rng.uniform(-1.0, 1.0);
        grads.push_back(g);
    }
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    sgd_step(state, grads, cfg, 0);
    for (std::size_t p = 0; p < state.params.size(); ++p) {
        for (std::size_t i = 0; i < state.params[p].value.size(); ++i) {
            CHECK(state.params[p].value[i] ==
                  reference.params[p].value[i] - 0.01 * grads[p][i]);
        }
    }
}

TEST_CASE("NaN gradients abort naming the parameter") {
    EdgeNetConfig net = tiny_net();
    ModelState state = init_params(net, 2);
    std::vector<Grid> grads;
    for (const Param& p : state.params) {
        grads.emplace_back(p.value.height(), p.value.width(), p.value.channels(), 0.0);
    }
    grads[2][0] = std::nan("");
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(sgd_step(state, grads, cfg, 0),
                         doctest::Contains(state.params[2].name.c_str()),
                         std::runtime_error);
}

TEST_CASE("init_params: reproducible, zero biases, calibrated spread") {
    EdgeNetConfig net = tiny_net(FusionMode::kCoFusion);
    ModelState a = init_params(net, 77);
    ModelState b = init_params(net, 77);
    for (std::size_t p = 0; p < a.params.size(); ++p) {
        for (std::size_t i = 0; i < a.params[p].value.size(); ++i) {
            CHECK(a.params[p].value[i] == b.params[p].value[i]);
        }
        if (a.params[p].name.ends_with("_bias")) {
            for (double v : a.params[p].value.values()) CHECK(v == 0.0);
        }
    }

    // Sample mean of 1e5 normal draws stays within three standard errors.
    Rng rng(123);
    const int n = 100000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += rng.normal(0.0, 0.01);
    mean /= n;
    CHECK(std::abs(mean) <= 3.0 * 0.01 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("zero-epoch training returns the initialized state unchanged") {
    EdgeNetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 31;
    TrainResult result = train(tiny_dataset(3, 0.0, 1), net, cfg);
    ModelState expected = init_params(net, 31);
    REQUIRE(result.state.params.size() == expected.params.size());
    for (std::size_t p = 0; p < expected.params.size(); ++p) {
        for (std::size_t i = 0; i < expected.params[p].value.size(); ++i) {
            CHECK(result.state.params[p].value[i] == expected.params[p].value[i]);
        }
    }
    CHECK(result.trace.empty());
}

TEST_CASE("fixed seeds give bit-identical loss traces") {
    EdgeNetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 17;
    auto dataset = tiny_dataset(4, 0.0, 2);
    TrainResult a = train(dataset, net, cfg);
    TrainResult b = train(dataset, net, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        CHECK(a.trace[e].mean_total == b.trace[e].mean_total);
        CHECK(a.trace[e].mean_ce == b.trace[e].mean_ce);
        CHECK(a.trace[e].mean_bdry == b.trace[e].mean_bdry);
        CHECK(a.trace[e].mean_tex == b.trace[e].mean_tex);
    }
    for (std::size_t p = 0; p < a.state.params.size(); ++p) {
        for (std::size_t i = 0; i < a.state.params[p].value.size(); ++i) {
            CHECK(a.state.params[p].value[i] == b.state.params[p].value[i]);
        }
    }
}

TEST_CASE("parallel per-sample evaluation matches the serial trace") {
    EdgeNetConfig net = tiny_net();
    TrainConfig serial;
    serial.epochs = 2;
    serial.batch_size = 4;
    serial.seed = 5;
    serial.jobs = 1;
    TrainConfig parallel = serial;
    parallel.jobs = 4;
    auto dataset = tiny_dataset(8, 0.0, 3);
    TrainResult a = train(dataset, net, serial);
    TrainResult b = train(dataset, net, parallel);
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        CHECK(a.trace[e].mean_total == b.trace[e].mean_total);
    }
    for (std::size_t p = 0; p < a.state.params.size(); ++p) {
        for (std::size_t i = 0; i < a.state.params[p].value.size(); ++i) {
            CHECK(a.state.params[p].value[i] == b.state.params[p].value[i]);
        }
    }
}

TEST_CASE("samples without supervision are skipped with a warning") {
    EdgeNetConfig net = tiny_net();
    auto dataset = tiny_dataset(2, 0.0, 4);
    // A consensus entirely inside the excluded band has no usable pixels.
    Grid controversial(16, 16, 1, 0.2);
    dataset.push_back({Grid(16, 16, 1, 0.5), derive_label(controversial, 0.3, 3)});
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 3;
    CHECK_NOTHROW(train(dataset, net, cfg));

    // A dataset with only unusable samples is rejected.
    std::vector<Sample> bad;
    bad.push_back({Grid(16, 16, 1, 0.5), derive_label(controversial, 0.3, 3)});
    CHECK_THROWS_AS(train(bad, net, cfg), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip and continue with identical losses") {
    EdgeNetConfig net = tiny_net();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 23;
    cfg.checkpoint_every = 1;
    const auto dir = std::filesystem::temp_directory_path() / "cats_ckpt_test";
    std::filesystem::create_directories(dir);
    auto dataset = tiny_dataset(4, 0.0, 5);
    TrainResult result = train(dataset, net, cfg, dir);
    ModelState loaded = load_model(dir / "checkpoint_epoch2.cats");
    for (std::size_t p = 0; p < result.state.params.size(); ++p) {
        for (std::size_t i = 0; i < result.state.params[p].value.size(); ++i) {
            CHECK(loaded.params[p].value[i] == result.state.params[p].value[i]);
            CHECK(loaded.params[p].momentum[i] == result.state.params[p].momentum[i]);
        }
    }

    // One more identical step from both copies stays bit-identical.
    auto step_once = [&](ModelState state) {
        EdgeNetForward fwd = edgenet_forward(dataset[0].image, state, net);
        EdgeNetLoss loss = edgenet_loss(fwd, dataset[0].label, net);
        backward(loss.total);
        std::vector<Grid> grads;
        for (const NodePtr& leaf : fwd.leaves) grads.push_back(leaf->grad);
        sgd_step(state, grads, cfg, 2);
        EdgeNetForward after = edgenet_forward(dataset[0].image, state, net);
        return edgenet_loss(after, dataset[0].label, net).values.total;
    };
    CHECK(step_once(result.state) == step_once(loaded));
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss trace CSV has the documented columns") {
    std::vector<EpochStats> trace = {{0, 1.5, 1.0, 0.25, 0.25}, {1, 1.0, 0.5, 0.25, 0.25}};
    const auto path = std::filesystem::temp_directory_path() / "cats_trace_test.csv";
    write_loss_csv(trace, path);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "epoch,mean_total,mean_ce,mean_bdry,mean_tex");
    std::string row;
    std::getline(is, row);
    CHECK(row.substr(0, 2) == "0,");
    std::filesystem::remove(path);
}

}  // TEST_SUITE
