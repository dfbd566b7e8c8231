#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cats/cofusion.hpp"
#include "cats/tracing_loss.hpp"

namespace cats {

enum class FusionMode { kFixed, kCoFusion };

// Miniature multi-stage side-output detector: `stages` blocks of 3x3
// ReLU convolutions with 2x2 pooling in between, a 1x1 side head per stage
// upsampled back to input resolution, and a fusion layer over the side
// logits.
struct EdgeNetConfig {
    int stages = 3;
    int convs_per_stage = 2;
    int base_channels = 16;  // doubled at each stage
    int cofusion_hidden = 32;
    int in_channels = 1;
    FusionMode fusion = FusionMode::kCoFusion;

    std::vector<TracingConfig> stage_loss;  // one per stage
    TracingConfig final_loss;

    int stage_channels(int stage_index) const {  // stage_index is 0-based
        return base_channels << stage_index;
    }
    void validate() const;
};

struct Param {
    std::string name;
    Grid value;
    Grid momentum;  // SGD slot, same shape as value
};

// All trainable grids plus optimizer slots. The parameter order is fixed by
// the architecture walk and also defines the serialized layout.
struct ModelState {
    int stages = 0;
    int convs_per_stage = 0;
    int base_channels = 0;
    int cofusion_hidden = 0;
    int in_channels = 0;
    FusionMode fusion = FusionMode::kFixed;
    std::uint32_t epoch = 0;
    std::vector<Param> params;

    bool matches(const EdgeNetConfig& cfg) const;
};

// Zeroed parameter set in declaration order.
ModelState make_zero_state(const EdgeNetConfig& cfg);

struct EdgeNetForward {
    std::vector<NodePtr> sides;  // L = stages logit maps at input resolution
    NodePtr final_logit;         // H x W x 1
    NodePtr cofusion_weights;    // null in fixed fusion mode
    std::vector<NodePtr> leaves; // parameter leaves, parallel to state.params
};

EdgeNetForward edgenet_forward(const Grid& image, const ModelState& state,
                               const EdgeNetConfig& cfg);

struct EdgeNetLoss {
    NodePtr total;
    TracingLossValues values;  // component values summed over all levels
};

// Deep supervision: tracing loss on every sigmoided side map plus the fused
// map, each with its own per-level config.
EdgeNetLoss edgenet_loss(const EdgeNetForward& fwd, const EdgeLabel& label,
                         const EdgeNetConfig& cfg);

// Binary model file: magic "CATSMDL1", little-endian u32 architecture counts,
// then per parameter the u32 dims followed by f64 value and momentum
// payloads in declaration order.
void save_model(const ModelState& state, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

}  // namespace cats
