#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cats/config.hpp"
#include "cats/gradcheck.hpp"
#include "cats/parallel.hpp"
#include "cats/pgm.hpp"

namespace fs = std::filesystem;
using namespace cats;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

int default_jobs() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

std::vector<Sample> load_samples(const fs::path& data_dir, const LossConfig& loss) {
    std::vector<Sample> samples;
    for (auto& s : load_dataset(data_dir)) {
        EdgeLabel label = derive_label(s.consensus, loss.delta, loss.k_bdry);
        samples.push_back({std::move(s.image), std::move(label)});
    }
    return samples;
}

std::string frame_name(std::size_t index, const std::string& suffix) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%04zu%s.pgm", index, suffix.c_str());
    return buffer;
}

int run_gen(const std::string& config_path, const std::string& out_dir,
            std::uint64_t seed, bool seed_given, int num_images) {
    RunConfig cfg = load_config_or_default(config_path);
    if (seed_given) cfg.synth.seed = seed;
    if (num_images > 0) cfg.synth.num_images = num_images;
    auto samples = generate(cfg.synth);
    write_dataset(samples, cfg.synth, out_dir);
    std::cout << "wrote " << samples.size() << " images under " << out_dir << "\n";
    return kExitOk;
}

struct TrainCliOptions {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string fusion;  // empty = from config
    std::string loss_kind = "tracing";
    bool bdry = true;
    bool tex = true;
    bool flags_given_bdry = false;
    bool flags_given_tex = false;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int epochs = -1;
    int jobs = 0;
};

int run_train(const TrainCliOptions& opt) {
    RunConfig cfg = load_config_or_default(opt.config_path);
    if (!opt.fusion.empty()) cfg.net.fusion = opt.fusion;
    if (opt.loss_kind == "ce") {
        cfg.loss.use_bdry = false;
        cfg.loss.use_tex = false;
    } else if (opt.loss_kind != "tracing") {
        throw std::invalid_argument("train: --loss must be 'ce' or 'tracing'");
    }
    if (opt.flags_given_bdry) cfg.loss.use_bdry = opt.bdry;
    if (opt.flags_given_tex) cfg.loss.use_tex = opt.tex;
    if (opt.seed_given) cfg.train.seed = opt.seed;
    if (opt.epochs >= 0) cfg.train.epochs = opt.epochs;
    if (opt.jobs > 0) cfg.train.jobs = opt.jobs;

    const EdgeNetConfig net = cfg.edgenet_config();
    auto samples = load_samples(opt.data_dir, cfg.loss);
    fs::create_directories(opt.out_dir);
    TrainResult result = train(samples, net, cfg.train, opt.out_dir);
    save_model(result.state, fs::path(opt.out_dir) / "model.cats");
    write_loss_csv(result.trace, fs::path(opt.out_dir) / "loss.csv");
    if (!result.trace.empty()) {
        std::cout << "final epoch mean loss " << result.trace.back().mean_total << "\n";
    }
    std::cout << "wrote " << (fs::path(opt.out_dir) / "model.cats").string() << "\n";
    return kExitOk;
}

int run_predict(const std::string& model_path, const std::string& data_dir,
                const std::string& out_dir, int jobs) {
    const ModelState state = load_model(model_path);
    EdgeNetConfig cfg;
    cfg.stages = state.stages;
    cfg.convs_per_stage = state.convs_per_stage;
    cfg.base_channels = state.base_channels;
    cfg.cofusion_hidden = state.cofusion_hidden;
    cfg.in_channels = state.in_channels;
    cfg.fusion = state.fusion;
    cfg.stage_loss.assign(cfg.stages, TracingConfig{});

    const auto image_files = list_pgm_files(fs::path(data_dir) / "images");
    if (image_files.empty()) {
        throw std::invalid_argument("predict: no images under " + data_dir);
    }
    fs::create_directories(out_dir);
    parallel_for(static_cast<int>(image_files.size()), jobs, [&](int i) {
        const Grid image = read_pgm(image_files[i]);
        EdgeNetForward fwd = edgenet_forward(image, state, cfg);
        write_pgm(sigmoid(fwd.final_logit)->value,
                  fs::path(out_dir) / frame_name(i, "_final"));
        for (int s = 0; s < cfg.stages; ++s) {
            write_pgm(sigmoid(fwd.sides[s])->value,
                      fs::path(out_dir) / frame_name(i, "_side" + std::to_string(s + 1)));
        }
        if (fwd.cofusion_weights) {
            const Grid& w = fwd.cofusion_weights->value;
            for (int s = 0; s < cfg.stages; ++s) {
                Grid map(w.height(), w.width(), 1);
                for (int y = 0; y < w.height(); ++y) {
                    for (int x = 0; x < w.width(); ++x) map.at(y, x) = w.at(y, x, s);
                }
                write_pgm(map, fs::path(out_dir) /
                                   frame_name(i, "_weight" + std::to_string(s + 1)));
            }
        }
    });
    std::cout << "wrote predictions for " << image_files.size() << " images under "
              << out_dir << "\n";
    return kExitOk;
}

int run_eval(const std::string& config_path, const std::string& pred_dir,
             const std::string& labels_dir, const std::string& protocol,
             double tolerance, double delta, const std::string& out_csv, int jobs) {
    RunConfig cfg = load_config_or_default(config_path);
    if (!protocol.empty()) {
        if (protocol == "standard") {
            cfg.eval.protocol = Protocol::kStandard;
        } else if (protocol == "crisp") {
            cfg.eval.protocol = Protocol::kCrisp;
        } else {
            throw std::invalid_argument("eval: --protocol must be 'standard' or 'crisp'");
        }
    }
    if (tolerance > 0.0) cfg.eval.tolerance = tolerance;
    if (delta >= 0.0) cfg.loss.delta = delta;

    const auto label_files = list_pgm_files(labels_dir);
    if (label_files.empty()) {
        throw std::invalid_argument("eval: no labels under " + labels_dir);
    }
    std::vector<Grid> predictions;
    std::vector<EdgeLabel> labels;
    for (const auto& label_file : label_files) {
        const std::string stem = label_file.stem().string();
        fs::path pred_file = fs::path(pred_dir) / (stem + "_final.pgm");
        if (!fs::exists(pred_file)) pred_file = fs::path(pred_dir) / (stem + ".pgm");
        if (!fs::exists(pred_file)) {
            throw std::invalid_argument("eval: no prediction for label " +
                                        label_file.filename().string());
        }
        predictions.push_back(read_pgm(pred_file));
        labels.push_back(derive_label(read_pgm(label_file), cfg.loss.delta, 3));
    }
    EvalResult result = evaluate(predictions, labels, cfg.eval, jobs);
    write_pr_csv(result, out_csv);
    std::printf("ODS F=%.4f (P=%.4f R=%.4f at t=%.2f)\n", result.ods.f1,
                result.ods.precision, result.ods.recall, result.ods_threshold);
    std::printf("OIS F=%.4f (P=%.4f R=%.4f)\n", result.ois.f1, result.ois.precision,
                result.ois.recall);
    std::cout << "wrote " << out_csv << "\n";
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed, int size, int seeds) {
    bool all_pass = true;
    for (const std::string& component : gradcheck_components()) {
        double worst = 0.0;
        for (int i = 0; i < seeds; ++i) {
            GradCheckReport report = check_component(component, seed + i, size);
            worst = std::max(worst, report.max_rel_err);
        }
        const bool pass = worst < 1e-5;
        all_pass = all_pass && pass;
        std::printf("%-14s max relative error %.3e  [%s]\n", component.c_str(), worst,
                    pass ? "ok" : "FAIL");
    }
    return all_pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "cats: crisp edge detection toolkit (tracing loss + context-aware fusion).\n"
        "Configuration is a JSON file with sections synth/net/train/loss/eval;\n"
        "run any subcommand with --help for the flag defaults, or see README.md\n"
        "for the full schema. Flags override config keys."};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, data_dir, model_path, pred_dir, labels_dir;
    std::string fusion, protocol, out_csv = "pr_curve.csv";
    std::uint64_t seed = 0;
    int num_images = 0, size = 8, seeds = 3;
    double tolerance = 0.0, delta = -1.0;
    int jobs = default_jobs();
    app.add_option("--jobs", jobs, "Worker thread cap")->capture_default_str();

    auto* gen = app.add_subcommand("gen", "Generate a synthetic edge dataset");
    gen->add_option("--config", config_path, "JSON run configuration");
    gen->add_option("--out", out_dir, "Output dataset directory")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "Override synth.seed");
    gen->add_option("--num-images", num_images, "Override synth.num_images");

    TrainCliOptions topt;
    auto* train_cmd = app.add_subcommand("train", "Train an edge detector");
    train_cmd->add_option("--config", topt.config_path, "JSON run configuration");
    train_cmd->add_option("--data", topt.data_dir, "Dataset directory")->required();
    train_cmd->add_option("--out", topt.out_dir, "Output directory")->required();
    train_cmd->add_option("--fusion", topt.fusion, "fixed|cofusion");
    train_cmd->add_option("--loss", topt.loss_kind, "ce|tracing")
        ->capture_default_str();
    auto* bdry_flag = train_cmd->add_flag("--bdry,!--no-bdry", topt.bdry,
                                          "Toggle the boundary tracing term");
    auto* tex_flag = train_cmd->add_flag("--tex,!--no-tex", topt.tex,
                                         "Toggle the texture suppression term");
    auto* train_seed = train_cmd->add_option("--seed", topt.seed, "Override train.seed");
    train_cmd->add_option("--epochs", topt.epochs, "Override train.epochs");

    auto* predict = app.add_subcommand("predict", "Write per-image prediction maps");
    predict->add_option("--model", model_path, "Model file")->required();
    predict->add_option("--data", data_dir, "Dataset directory")->required();
    predict->add_option("--out", out_dir, "Output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against labels");
    eval_cmd->add_option("--config", config_path, "JSON run configuration");
    eval_cmd->add_option("--pred", pred_dir, "Prediction directory")->required();
    eval_cmd->add_option("--labels", labels_dir, "Label directory")->required();
    eval_cmd->add_option("--protocol", protocol, "standard|crisp");
    eval_cmd->add_option("--tolerance", tolerance,
                         "Match tolerance as a fraction of the diagonal (default 0.0075)");
    eval_cmd->add_option("--delta", delta, "Consensus threshold for Y+ (default 0.3)");
    eval_cmd->add_option("--out", out_csv, "PR curve CSV path")->capture_default_str();

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Finite-difference checks for every loss and the network");
    gradcheck->add_option("--seed", seed, "Base seed")->capture_default_str();
    gradcheck->add_option("--size", size, "Instance size (pixels)")
        ->capture_default_str();
    gradcheck->add_option("--seeds", seeds, "Seeds per component")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (gen->parsed()) {
            return run_gen(config_path, out_dir, seed, gen_seed->count() > 0,
                           num_images);
        }
        if (train_cmd->parsed()) {
            topt.seed_given = train_seed->count() > 0;
            topt.flags_given_bdry = bdry_flag->count() > 0;
            topt.flags_given_tex = tex_flag->count() > 0;
            if (topt.jobs == 0) topt.jobs = jobs;
            return run_train(topt);
        }
        if (predict->parsed()) return run_predict(model_path, data_dir, out_dir, jobs);
        if (eval_cmd->parsed()) {
            return run_eval(config_path, pred_dir, labels_dir, protocol, tolerance,
                            delta, out_csv, jobs);
        }
        if (gradcheck->parsed()) {
            return run_gradcheck(seed == 0 ? 1 : seed, size, seeds);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitConfigError;
}
