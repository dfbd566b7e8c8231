#include "cats/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cats {

using nlohmann::json;

std::vector<TracingConfig> LossConfig::stage_configs(int stages) const {
    std::vector<TracingConfig> configs(stages);
    std::vector<bool> covered(stages, false);
    for (const auto& group : side_groups) {
        for (int stage : group.stages) {
            if (stage < 1 || stage > stages) {
                throw std::invalid_argument("loss config: side group references stage " +
                                            std::to_string(stage) + " of " +
                                            std::to_string(stages));
            }
            if (covered[stage - 1]) {
                throw std::invalid_argument("loss config: stage " + std::to_string(stage) +
                                            " appears in more than one side group");
            }
            covered[stage - 1] = true;
            TracingConfig& cfg = configs[stage - 1];
            cfg.lambda = lambda;
            cfg.lambda1 = use_bdry ? group.lambda1 : 0.0;
            cfg.lambda2 = use_tex ? group.lambda2 : 0.0;
            cfg.k_bdry = k_bdry;
            cfg.k_tex = k_tex;
            cfg.epsilon = epsilon;
        }
    }
    for (int s = 0; s < stages; ++s) {
        if (!covered[s]) {
            throw std::invalid_argument("loss config: stage " + std::to_string(s + 1) +
                                        " is not covered by any side group");
        }
    }
    return configs;
}

TracingConfig LossConfig::final_config() const {
    TracingConfig cfg;
    cfg.lambda = lambda;
    cfg.lambda1 = use_bdry ? final_lambda1 : 0.0;
    cfg.lambda2 = use_tex ? final_lambda2 : 0.0;
    cfg.k_bdry = k_bdry;
    cfg.k_tex = k_tex;
    cfg.epsilon = epsilon;
    return cfg;
}

FusionMode NetConfig::fusion_mode() const {
    if (fusion == "fixed") return FusionMode::kFixed;
    if (fusion == "cofusion") return FusionMode::kCoFusion;
    throw std::invalid_argument("net config: fusion must be 'fixed' or 'cofusion', got '" +
                                fusion + "'");
}

EdgeNetConfig RunConfig::edgenet_config() const {
    EdgeNetConfig cfg;
    cfg.stages = net.stages;
    cfg.convs_per_stage = net.convs_per_stage;
    cfg.base_channels = net.base_channels;
    cfg.cofusion_hidden = net.cofusion_hidden;
    cfg.fusion = net.fusion_mode();
    cfg.in_channels = 1;
    cfg.stage_loss = loss.stage_configs(net.stages);
    cfg.final_loss = loss.final_config();
    cfg.validate();
    return cfg;
}

namespace {

void require_known_keys(const json& obj, const std::set<std::string>& known,
                        const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_synth(const json& obj, SynthSpec& spec) {
    require_known_keys(obj,
                       {"image_size", "num_images", "min_shapes", "max_shapes",
                        "annotators", "annotator_jitter", "texture_amplitude_max",
                        "texture_period_min", "texture_period_max", "seed"},
                       "synth");
    read_field(obj, "image_size", spec.image_size);
    read_field(obj, "num_images", spec.num_images);
    read_field(obj, "min_shapes", spec.min_shapes);
    read_field(obj, "max_shapes", spec.max_shapes);
    read_field(obj, "annotators", spec.annotators);
    read_field(obj, "annotator_jitter", spec.annotator_jitter);
    read_field(obj, "texture_amplitude_max", spec.texture_amplitude_max);
    read_field(obj, "texture_period_min", spec.texture_period_min);
    read_field(obj, "texture_period_max", spec.texture_period_max);
    read_field(obj, "seed", spec.seed);
}

void parse_net(const json& obj, NetConfig& net) {
    require_known_keys(
        obj, {"stages", "convs_per_stage", "base_channels", "cofusion_hidden", "fusion"},
        "net");
    read_field(obj, "stages", net.stages);
    read_field(obj, "convs_per_stage", net.convs_per_stage);
    read_field(obj, "base_channels", net.base_channels);
    read_field(obj, "cofusion_hidden", net.cofusion_hidden);
    read_field(obj, "fusion", net.fusion);
    net.fusion_mode();  // validates the name
}

void parse_train(const json& obj, TrainConfig& train) {
    require_known_keys(obj,
                       {"lr0", "momentum", "weight_decay", "batch_size", "epochs",
                        "lr_drop_period", "lr_drop_factor", "seed", "checkpoint_every",
                        "jobs"},
                       "train");
    read_field(obj, "lr0", train.lr0);
    read_field(obj, "momentum", train.momentum);
    read_field(obj, "weight_decay", train.weight_decay);
    read_field(obj, "batch_size", train.batch_size);
    read_field(obj, "epochs", train.epochs);
    read_field(obj, "lr_drop_period", train.lr_drop_period);
    read_field(obj, "lr_drop_factor", train.lr_drop_factor);
    read_field(obj, "seed", train.seed);
    read_field(obj, "checkpoint_every", train.checkpoint_every);
    read_field(obj, "jobs", train.jobs);
}

void parse_loss(const json& obj, LossConfig& loss) {
    require_known_keys(obj,
                       {"delta", "lambda", "epsilon", "k_bdry", "k_tex", "use_bdry",
                        "use_tex", "side_groups", "final"},
                       "loss");
    read_field(obj, "delta", loss.delta);
    read_field(obj, "lambda", loss.lambda);
    read_field(obj, "epsilon", loss.epsilon);
    read_field(obj, "k_bdry", loss.k_bdry);
    read_field(obj, "k_tex", loss.k_tex);
    read_field(obj, "use_bdry", loss.use_bdry);
    read_field(obj, "use_tex", loss.use_tex);
    if (obj.contains("side_groups")) {
        loss.side_groups.clear();
        for (const auto& g : obj.at("side_groups")) {
            require_known_keys(g, {"stages", "lambda1", "lambda2"}, "loss.side_groups");
            LossStageGroup group;
            group.stages = g.at("stages").get<std::vector<int>>();
            group.lambda1 = g.at("lambda1").get<double>();
            group.lambda2 = g.at("lambda2").get<double>();
            loss.side_groups.push_back(std::move(group));
        }
    }
    if (obj.contains("final")) {
        const auto& f = obj.at("final");
        require_known_keys(f, {"lambda1", "lambda2"}, "loss.final");
        read_field(f, "lambda1", loss.final_lambda1);
        read_field(f, "lambda2", loss.final_lambda2);
    }
}

void parse_eval(const json& obj, EvalConfig& eval) {
    require_known_keys(obj, {"tolerance", "thresholds", "protocol", "nms_sigma"},
                       "eval");
    read_field(obj, "tolerance", eval.tolerance);
    read_field(obj, "thresholds", eval.thresholds);
    if (obj.contains("protocol")) {
        const std::string protocol = obj.at("protocol").get<std::string>();
        if (protocol == "standard") {
            eval.protocol = Protocol::kStandard;
        } else if (protocol == "crisp") {
            eval.protocol = Protocol::kCrisp;
        } else {
            throw std::invalid_argument(
                "config: eval.protocol must be 'standard' or 'crisp'");
        }
    }
    read_field(obj, "nms_sigma", eval.nms_sigma);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    require_known_keys(doc, {"synth", "net", "train", "loss", "eval"}, "top level");
    RunConfig cfg;
    if (doc.contains("synth")) parse_synth(doc.at("synth"), cfg.synth);
    if (doc.contains("net")) parse_net(doc.at("net"), cfg.net);
    if (doc.contains("train")) parse_train(doc.at("train"), cfg.train);
    if (doc.contains("loss")) parse_loss(doc.at("loss"), cfg.loss);
    if (doc.contains("eval")) parse_eval(doc.at("eval"), cfg.eval);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_run_config(buffer.str());
}

std::string dump_default_config() {
    const RunConfig cfg;
    json side_groups = json::array();
    for (const auto& g : cfg.loss.side_groups) {
        side_groups.push_back(
            {{"stages", g.stages}, {"lambda1", g.lambda1}, {"lambda2", g.lambda2}});
    }
    const json doc = {
        {"synth",
         {{"image_size", cfg.synth.image_size},
          {"num_images", cfg.synth.num_images},
          {"min_shapes", cfg.synth.min_shapes},
          {"max_shapes", cfg.synth.max_shapes},
          {"annotators", cfg.synth.annotators},
          {"annotator_jitter", cfg.synth.annotator_jitter},
          {"texture_amplitude_max", cfg.synth.texture_amplitude_max},
          {"texture_period_min", cfg.synth.texture_period_min},
          {"texture_period_max", cfg.synth.texture_period_max},
          {"seed", cfg.synth.seed}}},
        {"net",
         {{"stages", cfg.net.stages},
          {"convs_per_stage", cfg.net.convs_per_stage},
          {"base_channels", cfg.net.base_channels},
          {"cofusion_hidden", cfg.net.cofusion_hidden},
          {"fusion", cfg.net.fusion}}},
        {"train",
         {{"lr0", cfg.train.lr0},
          {"momentum", cfg.train.momentum},
          {"weight_decay", cfg.train.weight_decay},
          {"batch_size", cfg.train.batch_size},
          {"epochs", cfg.train.epochs},
          {"lr_drop_period", cfg.train.lr_drop_period},
          {"lr_drop_factor", cfg.train.lr_drop_factor},
          {"seed", cfg.train.seed},
          {"checkpoint_every", cfg.train.checkpoint_every},
          {"jobs", cfg.train.jobs}}},
        {"loss",
         {{"delta", cfg.loss.delta},
          {"lambda", cfg.loss.lambda},
          {"epsilon", cfg.loss.epsilon},
          {"k_bdry", cfg.loss.k_bdry},
          {"k_tex", cfg.loss.k_tex},
          {"use_bdry", cfg.loss.use_bdry},
          {"use_tex", cfg.loss.use_tex},
          {"side_groups", side_groups},
          {"final",
           {{"lambda1", cfg.loss.final_lambda1}, {"lambda2", cfg.loss.final_lambda2}}}}},
        {"eval",
         {{"tolerance", cfg.eval.tolerance},
          {"thresholds", cfg.eval.thresholds},
          {"protocol", cfg.eval.protocol == Protocol::kStandard ? "standard" : "crisp"},
          {"nms_sigma", cfg.eval.nms_sigma}}},
    };
    return doc.dump(2);
}

}  // namespace cats
