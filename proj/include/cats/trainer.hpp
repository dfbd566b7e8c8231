#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cats/edgenet.hpp"

namespace cats {

struct TrainConfig {
    double lr0 = 1e-3;  // desk-scale preset; the full-scale setting is 1e-6
    double momentum = 0.9;
    double weight_decay = 2e-4;
    int batch_size = 10;
    int epochs = 60;
    int lr_drop_period = 20;   // epochs between x lr_drop_factor steps
    double lr_drop_factor = 0.1;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    int jobs = 1;              // per-sample forward/backward workers

    void validate() const;
};

// Step schedule: lr0 * factor^floor(epoch / period), epochs counted from 0.
double learning_rate(const TrainConfig& cfg, int epoch);

// Gaussian-initialized parameters: conv weights ~ N(0, 0.01^2) drawn in
// declaration order from Rng(seed), biases exactly 0.
ModelState init_params(const EdgeNetConfig& cfg, std::uint64_t seed);

// Classic coupled SGD: v <- momentum*v + g + weight_decay*theta;
// theta <- theta - lr(epoch)*v. Rejects NaN gradients naming the parameter.
void sgd_step(ModelState& state, const std::vector<Grid>& gradients,
              const TrainConfig& cfg, int epoch);

struct Sample {
    Grid image;
    EdgeLabel label;
};

struct EpochStats {
    int epoch = 0;
    double mean_total = 0.0;
    double mean_ce = 0.0;
    double mean_bdry = 0.0;
    double mean_tex = 0.0;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochStats> trace;
};

// Full loop: shuffled mini-batches, per-sample graphs evaluated (possibly in
// parallel) with gradients reduced in sample order, one SGD step per batch.
// Batch gradients are sums, not means. Samples whose positive and negative
// sets are both empty are skipped with a warning.
TrainResult train(const std::vector<Sample>& dataset, const EdgeNetConfig& net_cfg,
                  const TrainConfig& train_cfg,
                  const std::filesystem::path& checkpoint_dir = {});

void write_loss_csv(const std::vector<EpochStats>& trace,
                    const std::filesystem::path& path);

}  // namespace cats
