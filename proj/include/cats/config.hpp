#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cats/edgenet.hpp"
#include "cats/eval.hpp"
#include "cats/synth.hpp"
#include "cats/trainer.hpp"

namespace cats {

// One row of the per-level loss weighting: the stages (1-based) sharing a
// lambda1/lambda2 pair.
struct LossStageGroup {
    std::vector<int> stages;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

struct LossConfig {
    double delta = 0.3;
    double lambda = 1.1;
    double epsilon = 1e-10;
    int k_bdry = 7;
    int k_tex = 3;
    bool use_bdry = true;
    bool use_tex = true;
    std::vector<LossStageGroup> side_groups = {{{1, 2}, 2.0, 0.05}, {{3}, 1.0, 0.1}};
    double final_lambda1 = 4.0;
    double final_lambda2 = 0.05;

    // Expands the groups into one TracingConfig per stage; every stage must
    // be covered by exactly one group.
    std::vector<TracingConfig> stage_configs(int stages) const;
    TracingConfig final_config() const;
};

struct NetConfig {
    int stages = 3;
    int convs_per_stage = 2;
    int base_channels = 16;
    int cofusion_hidden = 32;
    std::string fusion = "cofusion";  // or "fixed"

    FusionMode fusion_mode() const;
};

// The JSON config document: sections synth/net/train/loss/eval. Unknown keys
// are rejected.
struct RunConfig {
    SynthSpec synth;
    NetConfig net;
    TrainConfig train;
    LossConfig loss;
    EvalConfig eval;

    EdgeNetConfig edgenet_config() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_default_config();

}  // namespace cats
