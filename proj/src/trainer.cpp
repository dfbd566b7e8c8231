#include "cats/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "cats/parallel.hpp"
#include "cats/rng.hpp"

namespace cats {

void TrainConfig::validate() const {
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
    }
    if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) {
        throw std::invalid_argument("TrainConfig: lr_drop_factor must lie in (0, 1]");
    }
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (lr_drop_period < 1) {
        throw std::invalid_argument("TrainConfig: lr_drop_period must be >= 1");
    }
    if (weight_decay < 0.0 || lr0 < 0.0) {
        throw std::invalid_argument("TrainConfig: lr0 and weight_decay must be >= 0");
    }
}

double learning_rate(const TrainConfig& cfg, int epoch) {
    const int drops = epoch / cfg.lr_drop_period;
    double lr = cfg.lr0;
    for (int i = 0; i < drops; ++i) lr *= cfg.lr_drop_factor;
    return lr;
}

ModelState init_params(const EdgeNetConfig& cfg, std::uint64_t seed) {
    ModelState state = make_zero_state(cfg);
    Rng rng(seed);
    for (Param& p : state.params) {
        if (p.name.ends_with("_bias")) continue;  // biases stay 0
        for (double& v : p.value.values()) v = rng.normal(0.0, 0.01);
    }
    return state;
}

void sgd_step(ModelState& state, const std::vector<Grid>& gradients,
              const TrainConfig& cfg, int epoch) {
    cfg.validate();
    if (gradients.size() != state.params.size()) {
        throw std::invalid_argument("sgd_step: gradient count does not match parameters");
    }
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        Param& p = state.params[i];
        const Grid& g = gradients[i];
        if (!g.same_shape(p.value)) {
            throw std::invalid_argument("sgd_step: gradient shape mismatch for " + p.name);
        }
        for (double v : g.values()) {
            if (std::isnan(v)) {
                throw std::runtime_error("sgd_step: NaN gradient for parameter " + p.name);
            }
        }
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            p.momentum[j] = cfg.momentum * p.momentum[j] + g[j] +
                            cfg.weight_decay * p.value[j];
            p.value[j] -= lr * p.momentum[j];
        }
    }
}

namespace {

struct SampleResult {
    bool skipped = false;
    std::vector<Grid> gradients;
    TracingLossValues values;
};

SampleResult run_sample(const Sample& sample, const ModelState& state,
                        const EdgeNetConfig& cfg) {
    SampleResult result;
    if (sample.label.positive_count + sample.label.negative_count == 0) {
        result.skipped = true;
        return result;
    }
    EdgeNetForward fwd = edgenet_forward(sample.image, state, cfg);
    EdgeNetLoss loss = edgenet_loss(fwd, sample.label, cfg);
    backward(loss.total);
    result.values = loss.values;
    result.gradients.reserve(fwd.leaves.size());
    for (const NodePtr& leaf : fwd.leaves) result.gradients.push_back(leaf->grad);
    return result;
}

}  // namespace

TrainResult train(const std::vector<Sample>& dataset, const EdgeNetConfig& net_cfg,
                  const TrainConfig& train_cfg,
                  const std::filesystem::path& checkpoint_dir) {
    net_cfg.validate();
    train_cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    bool any_usable = false;
    for (const Sample& s : dataset) {
        if (s.label.positive_count + s.label.negative_count > 0) {
            any_usable = true;
            break;
        }
    }
    if (!any_usable) {
        throw std::invalid_argument("train: no sample has a nonempty positive or "
                                    "negative set");
    }

    TrainResult result;
    result.state = init_params(net_cfg, train_cfg.seed);
    Rng shuffle_rng = Rng(train_cfg.seed).split(1);

    const int n = static_cast<int>(dataset.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        // Fisher-Yates from the dedicated shuffle stream.
        for (int i = n - 1; i > 0; --i) {
            const int j = shuffle_rng.uniform_int(0, i);
            std::swap(order[i], order[j]);
        }

        EpochStats stats;
        stats.epoch = epoch;
        int used = 0;
        for (int begin = 0; begin < n; begin += train_cfg.batch_size) {
            const int end = std::min(n, begin + train_cfg.batch_size);
            const int batch = end - begin;
            std::vector<SampleResult> results(batch);
            parallel_for(batch, train_cfg.jobs, [&](int i) {
                results[i] = run_sample(dataset[order[begin + i]], result.state, net_cfg);
            });

            std::vector<Grid> grad_sum;
            for (int i = 0; i < batch; ++i) {
                SampleResult& r = results[i];
                if (r.skipped) {
                    std::cerr << "train: skipping sample " << order[begin + i]
                              << " (positive and negative sets both empty)\n";
                    continue;
                }
                if (grad_sum.empty()) {
                    grad_sum = std::move(r.gradients);
                } else {
                    for (std::size_t p = 0; p < grad_sum.size(); ++p) {
                        for (std::size_t j = 0; j < grad_sum[p].size(); ++j) {
                            grad_sum[p][j] += r.gradients[p][j];
                        }
                    }
                }
                stats.mean_total += r.values.total;
                stats.mean_ce += r.values.ce;
                stats.mean_bdry += r.values.bdry;
                stats.mean_tex += r.values.tex;
                ++used;
            }
            if (!grad_sum.empty()) {
                sgd_step(result.state, grad_sum, train_cfg, epoch);
            }
        }
        if (used > 0) {
            stats.mean_total /= used;
            stats.mean_ce /= used;
            stats.mean_bdry /= used;
            stats.mean_tex /= used;
        }
        result.trace.push_back(stats);
        result.state.epoch = static_cast<std::uint32_t>(epoch + 1);

        if (train_cfg.checkpoint_every > 0 && !checkpoint_dir.empty() &&
            (epoch + 1) % train_cfg.checkpoint_every == 0) {
            save_model(result.state,
                       checkpoint_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) +
                                         ".cats"));
        }
    }
    return result;
}

void write_loss_csv(const std::vector<EpochStats>& trace,
                    const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_loss_csv: cannot open " + path.string());
    os << "epoch,mean_total,mean_ce,mean_bdry,mean_tex\n";
    char line[256];
    for (const EpochStats& s : trace) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", s.epoch,
                      s.mean_total, s.mean_ce, s.mean_bdry, s.mean_tex);
        os << line;
    }
    if (!os) throw std::runtime_error("write_loss_csv: write failed for " + path.string());
}

}  // namespace cats
