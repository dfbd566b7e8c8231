#include "cats/edgenet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cats {

void EdgeNetConfig::validate() const {
    if (stages < 1 || convs_per_stage < 1 || base_channels < 1 || in_channels < 1) {
        throw std::invalid_argument("EdgeNetConfig: counts must be >= 1");
    }
    if (fusion == FusionMode::kCoFusion && cofusion_hidden < 1) {
        throw std::invalid_argument("EdgeNetConfig: cofusion_hidden must be >= 1");
    }
    if (static_cast<int>(stage_loss.size()) != stages) {
        throw std::invalid_argument("EdgeNetConfig: need exactly one TracingConfig per "
                                    "stage plus the final one, got " +
                                    std::to_string(stage_loss.size()) + " for " +
                                    std::to_string(stages) + " stages");
    }
    for (const auto& cfg : stage_loss) cfg.validate();
    final_loss.validate();
}

bool ModelState::matches(const EdgeNetConfig& cfg) const {
    return stages == cfg.stages && convs_per_stage == cfg.convs_per_stage &&
           base_channels == cfg.base_channels && in_channels == cfg.in_channels &&
           fusion == cfg.fusion &&
           (fusion != FusionMode::kCoFusion || cofusion_hidden == cfg.cofusion_hidden);
}

namespace {

void push_kernel_params(ModelState& state, const std::string& prefix, int kh, int kw,
                        int in_c, int out_c) {
    state.params.push_back({prefix + "_weight", Grid(kh, kw, in_c * out_c, 0.0),
                            Grid(kh, kw, in_c * out_c, 0.0)});
    state.params.push_back(
        {prefix + "_bias", Grid(1, 1, out_c, 0.0), Grid(1, 1, out_c, 0.0)});
}

}  // namespace

ModelState make_zero_state(const EdgeNetConfig& cfg) {
    cfg.validate();
    ModelState state;
    state.stages = cfg.stages;
    state.convs_per_stage = cfg.convs_per_stage;
    state.base_channels = cfg.base_channels;
    state.cofusion_hidden = cfg.cofusion_hidden;
    state.in_channels = cfg.in_channels;
    state.fusion = cfg.fusion;

    for (int s = 0; s < cfg.stages; ++s) {
        const int out_c = cfg.stage_channels(s);
        for (int c = 0; c < cfg.convs_per_stage; ++c) {
            const int in_c = (c == 0) ? (s == 0 ? cfg.in_channels : cfg.stage_channels(s - 1))
                                      : out_c;
            push_kernel_params(state,
                               "stage" + std::to_string(s + 1) + "_conv" +
                                   std::to_string(c + 1),
                               3, 3, in_c, out_c);
        }
    }
    for (int s = 0; s < cfg.stages; ++s) {
        push_kernel_params(state, "side" + std::to_string(s + 1), 1, 1,
                           cfg.stage_channels(s), 1);
    }
    if (cfg.fusion == FusionMode::kFixed) {
        state.params.push_back({"fusion_weight", Grid(1, 1, cfg.stages, 0.0),
                                Grid(1, 1, cfg.stages, 0.0)});
    } else {
        push_kernel_params(state, "cofusion_conv1", 3, 3, cfg.stages, cfg.cofusion_hidden);
        push_kernel_params(state, "cofusion_conv2", 3, 3, cfg.cofusion_hidden,
                           cfg.cofusion_hidden);
        push_kernel_params(state, "cofusion_conv3", 3, 3, cfg.cofusion_hidden, cfg.stages);
    }
    return state;
}

namespace {

// Walks the parameter leaves in declaration order during graph construction.
class ParamCursor {
public:
    ParamCursor(const ModelState& state, std::vector<NodePtr>& leaves)
        : state_(state), leaves_(leaves) {
        leaves_.reserve(state.params.size());
    }

    NodePtr next(const char* expected_suffix) {
        if (index_ >= state_.params.size()) {
            throw std::logic_error("edgenet_forward: parameter walk out of bounds");
        }
        const Param& p = state_.params[index_];
        if (!p.name.ends_with(expected_suffix)) {
            throw std::logic_error("edgenet_forward: expected parameter ending in '" +
                                   std::string(expected_suffix) + "', found " + p.name);
        }
        ++index_;
        leaves_.push_back(make_leaf(p.value));
        return leaves_.back();
    }

    KernelNodes next_kernel(int kh, int kw, int in_c, int out_c) {
        KernelNodes k;
        k.spec = ConvSpec{kh, kw, in_c, out_c, true};
        k.weights = next("_weight");
        k.bias = next("_bias");
        return k;
    }

private:
    const ModelState& state_;
    std::vector<NodePtr>& leaves_;
    std::size_t index_ = 0;
};

}  // namespace

EdgeNetForward edgenet_forward(const Grid& image, const ModelState& state,
                               const EdgeNetConfig& cfg) {
    cfg.validate();
    if (!state.matches(cfg)) {
        throw std::invalid_argument("edgenet_forward: model state does not match config");
    }
    if (image.channels() != cfg.in_channels) {
        throw std::invalid_argument("edgenet_forward: image has " +
                                    std::to_string(image.channels()) +
                                    " channels, config expects " +
                                    std::to_string(cfg.in_channels));
    }
    const int min_extent = 1 << (cfg.stages - 1);
    if (image.height() < min_extent || image.width() < min_extent) {
        throw std::invalid_argument("edgenet_forward: image " + image.shape_string() +
                                    " smaller than " + std::to_string(min_extent) +
                                    " required by " + std::to_string(cfg.stages) +
                                    " stages");
    }

    EdgeNetForward out;
    ParamCursor cursor(state, out.leaves);

    NodePtr x = make_leaf(image);
    std::vector<NodePtr> raw_sides(cfg.stages);
    for (int s = 0; s < cfg.stages; ++s) {
        const int out_c = cfg.stage_channels(s);
        for (int c = 0; c < cfg.convs_per_stage; ++c) {
            const int in_c = (c == 0) ? (s == 0 ? cfg.in_channels : cfg.stage_channels(s - 1))
                                      : out_c;
            x = relu(apply_kernel(x, cursor.next_kernel(3, 3, in_c, out_c)));
        }
        raw_sides[s] = x;
        if (s + 1 < cfg.stages) x = maxpool2(x);
    }
    out.sides.resize(cfg.stages);
    for (int s = 0; s < cfg.stages; ++s) {
        NodePtr logit =
            apply_kernel(raw_sides[s], cursor.next_kernel(1, 1, cfg.stage_channels(s), 1));
        out.sides[s] = upsample_bilinear(logit, 1 << s);
    }

    if (cfg.fusion == FusionMode::kFixed) {
        out.final_logit = fixed_weight_fusion(out.sides, cursor.next("fusion_weight"));
    } else {
        CoFusionNodes fusion;
        fusion.conv1 = cursor.next_kernel(3, 3, cfg.stages, cfg.cofusion_hidden);
        fusion.conv2 = cursor.next_kernel(3, 3, cfg.cofusion_hidden, cfg.cofusion_hidden);
        fusion.conv3 = cursor.next_kernel(3, 3, cfg.cofusion_hidden, cfg.stages);
        CoFusionOutput fused = cofusion_forward(out.sides, fusion);
        out.final_logit = fused.final_logit;
        out.cofusion_weights = fused.weights;
    }
    return out;
}

EdgeNetLoss edgenet_loss(const EdgeNetForward& fwd, const EdgeLabel& label,
                         const EdgeNetConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(fwd.sides.size()) != cfg.stages) {
        throw std::invalid_argument("edgenet_loss: side count does not match config");
    }
    EdgeNetLoss out;
    for (int s = 0; s < cfg.stages; ++s) {
        TracingLossNode part =
            tracing_loss(sigmoid(fwd.sides[s]), label, cfg.stage_loss[s]);
        out.total = out.total ? add(out.total, part.total) : part.total;
        out.values.total += part.values.total;
        out.values.ce += part.values.ce;
        out.values.bdry += part.values.bdry;
        out.values.tex += part.values.tex;
    }
    TracingLossNode final_part =
        tracing_loss(sigmoid(fwd.final_logit), label, cfg.final_loss);
    out.total = add(out.total, final_part.total);
    out.values.total += final_part.values.total;
    out.values.ce += final_part.values.ce;
    out.values.bdry += final_part.values.bdry;
    out.values.tex += final_part.values.tex;
    return out;
}

namespace {

constexpr char kModelMagic[8] = {'C', 'A', 'T', 'S', 'M', 'D', 'L', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b, 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void put_grid(std::ostream& os, const Grid& g) {
    for (double v : g.values()) put_f64(os, v);
}

void get_grid(std::istream& is, Grid& g) {
    for (double& v : g.values()) v = get_f64(is);
}

}  // namespace

void save_model(const ModelState& state, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_model: cannot open " + path.string());
    os.write(kModelMagic, sizeof(kModelMagic));
    put_u32(os, static_cast<std::uint32_t>(state.stages));
    put_u32(os, static_cast<std::uint32_t>(state.convs_per_stage));
    put_u32(os, static_cast<std::uint32_t>(state.base_channels));
    put_u32(os, static_cast<std::uint32_t>(state.cofusion_hidden));
    put_u32(os, static_cast<std::uint32_t>(state.in_channels));
    put_u32(os, state.fusion == FusionMode::kCoFusion ? 1u : 0u);
    put_u32(os, state.epoch);
    put_u32(os, static_cast<std::uint32_t>(state.params.size()));
    for (const Param& p : state.params) {
        put_u32(os, static_cast<std::uint32_t>(p.value.height()));
        put_u32(os, static_cast<std::uint32_t>(p.value.width()));
        put_u32(os, static_cast<std::uint32_t>(p.value.channels()));
        put_grid(os, p.value);
        put_grid(os, p.momentum);
    }
    if (!os) throw std::runtime_error("save_model: write failed for " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kModelMagic, 8) != 0) {
        throw std::runtime_error("load_model: bad magic in " + path.string());
    }

    EdgeNetConfig cfg;
    cfg.stages = static_cast<int>(get_u32(is));
    cfg.convs_per_stage = static_cast<int>(get_u32(is));
    cfg.base_channels = static_cast<int>(get_u32(is));
    cfg.cofusion_hidden = static_cast<int>(get_u32(is));
    cfg.in_channels = static_cast<int>(get_u32(is));
    cfg.fusion = get_u32(is) == 1u ? FusionMode::kCoFusion : FusionMode::kFixed;
    const std::uint32_t epoch = get_u32(is);
    const std::uint32_t param_count = get_u32(is);
    if (!is) throw std::runtime_error("load_model: truncated header in " + path.string());
    cfg.stage_loss.assign(cfg.stages, TracingConfig{});

    ModelState state = make_zero_state(cfg);
    state.epoch = epoch;
    if (param_count != state.params.size()) {
        throw std::runtime_error("load_model: parameter count mismatch in " +
                                 path.string());
    }
    for (Param& p : state.params) {
        const int h = static_cast<int>(get_u32(is));
        const int w = static_cast<int>(get_u32(is));
        const int c = static_cast<int>(get_u32(is));
        if (h != p.value.height() || w != p.value.width() || c != p.value.channels()) {
            throw std::runtime_error("load_model: shape mismatch for " + p.name);
        }
        get_grid(is, p.value);
        get_grid(is, p.momentum);
        if (!is) throw std::runtime_error("load_model: truncated payload in " +
                                          path.string());
    }
    return state;
}

}  // namespace cats
