// Command-line entry point: train / search / eval / visualize / gradcheck.
//
// All commands read a single JSON run config (schema-validated, unknown keys
// rejected) and write their artifacts under the configured output directory.
// Everything is reproducible from (config, seed); wall-clock timestamps live
// only in run_meta.json.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attzoom/backbones.hpp"
#include "attzoom/data.hpp"
#include "attzoom/interpret.hpp"
#include "attzoom/optim.hpp"
#include "attzoom/search.hpp"
#include "attzoom/selfcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace az;

namespace {

// ---------------------------------------------------------------- logging --

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("ATTZOOM_LOG");
        if (env == nullptr) return LogLevel::Info;
        std::string s(env);
        if (s == "error") return LogLevel::Error;
        if (s == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

// ------------------------------------------------------------- run config --

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& section) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (allowed.find(key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
        }
    }
}

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir;

    std::string data_source = "synthetic";
    std::string data_path;
    double val_fraction = 0.2;
    data::SyntheticLocalizationSpec synthetic;

    model::ModelSpec model;

    optim::TrainConfig train;

    search::SearchSpace space;
    int n_trials = 5;
    int max_epochs_per_trial = 10;
    bool paired = true;

    double lambda = 1.0;
    std::string layer;  // empty = model default
    int n_images = 4;
};

void parse_data_section(const json& j, RunConfig& cfg) {
    check_keys(j, {"source", "path", "val_fraction", "synthetic"}, "data");
    if (j.contains("source")) cfg.data_source = j["source"];
    if (cfg.data_source != "synthetic" && cfg.data_source != "cifar10" &&
        cfg.data_source != "cifar100") {
        throw ConfigError("data.source must be synthetic, cifar10, or cifar100");
    }
    if (j.contains("path")) cfg.data_path = j["path"];
    if (j.contains("val_fraction")) cfg.val_fraction = j["val_fraction"];
    if (j.contains("synthetic")) {
        const json& s = j["synthetic"];
        check_keys(s, {"classes", "image_size", "channels", "patch_size", "noise_std",
                       "samples", "seed"},
                   "data.synthetic");
        auto& sp = cfg.synthetic;
        if (s.contains("classes")) sp.classes = s["classes"];
        if (s.contains("image_size")) sp.image_size = s["image_size"];
        if (s.contains("channels")) sp.channels = s["channels"];
        if (s.contains("patch_size")) sp.patch_size = s["patch_size"];
        if (s.contains("noise_std")) sp.noise_std = s["noise_std"];
        if (s.contains("samples")) sp.samples = s["samples"];
        if (s.contains("seed")) sp.seed = s["seed"];
        sp.validate();
    }
}

void parse_model_section(const json& j, RunConfig& cfg) {
    check_keys(j, {"arch", "num_classes", "input_shape", "seed", "insertions"}, "model");
    if (j.contains("insertions")) {
        for (const auto& ji : j["insertions"]) {
            check_keys(ji, {"stage", "attzoom"}, "model.insertions[]");
            if (ji.contains("attzoom")) {
                check_keys(ji["attzoom"],
                           {"attention_kernel", "threshold", "zoom", "enhance_kernel",
                            "enhance_stride", "enhance_out_channels", "learn_threshold",
                            "straight_through", "has_bias"},
                           "model.insertions[].attzoom");
            }
        }
    }
    cfg.model = model::ModelSpec::from_json(j.dump());
}

void parse_train_section(const json& j, RunConfig& cfg) {
    check_keys(j,
               {"batch_size", "learning_rate", "weight_decay", "optimizer", "momentum",
                "scheduler", "step_size", "max_epochs", "early_stop_patience", "augment",
                "seed"},
               "train");
    auto& t = cfg.train;
    if (j.contains("batch_size")) t.batch_size = j["batch_size"];
    if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"];
    if (j.contains("weight_decay")) t.weight_decay = j["weight_decay"];
    if (j.contains("optimizer")) t.optimizer = optim::optimizer_from_string(j["optimizer"]);
    if (j.contains("momentum")) t.momentum = j["momentum"];
    if (j.contains("scheduler")) t.scheduler = optim::scheduler_from_string(j["scheduler"]);
    if (j.contains("step_size")) t.step_size = j["step_size"];
    if (j.contains("max_epochs")) t.max_epochs = j["max_epochs"];
    if (j.contains("early_stop_patience")) t.early_stop_patience = j["early_stop_patience"];
    if (j.contains("augment")) t.augment = j["augment"];
    if (j.contains("seed")) t.seed = j["seed"];
    t.validate();
}

void parse_search_section(const json& j, RunConfig& cfg) {
    check_keys(j, {"n_trials", "max_epochs_per_trial", "paired", "space"}, "search");
    if (j.contains("n_trials")) cfg.n_trials = j["n_trials"];
    if (j.contains("max_epochs_per_trial")) cfg.max_epochs_per_trial = j["max_epochs_per_trial"];
    if (j.contains("paired")) cfg.paired = j["paired"];
    if (j.contains("space")) {
        const json& s = j["space"];
        check_keys(s,
                   {"batch_sizes", "lr_lo", "lr_hi", "wd_lo", "wd_hi", "momentum_lo",
                    "momentum_hi", "step_lo", "step_hi"},
                   "search.space");
        auto& sp = cfg.space;
        if (s.contains("batch_sizes")) sp.batch_sizes = s["batch_sizes"].get<std::vector<int>>();
        if (s.contains("lr_lo")) sp.lr_lo = s["lr_lo"];
        if (s.contains("lr_hi")) sp.lr_hi = s["lr_hi"];
        if (s.contains("wd_lo")) sp.wd_lo = s["wd_lo"];
        if (s.contains("wd_hi")) sp.wd_hi = s["wd_hi"];
        if (s.contains("momentum_lo")) sp.momentum_lo = s["momentum_lo"];
        if (s.contains("momentum_hi")) sp.momentum_hi = s["momentum_hi"];
        if (s.contains("step_lo")) sp.step_lo = s["step_lo"];
        if (s.contains("step_hi")) sp.step_hi = s["step_hi"];
    }
    if (cfg.n_trials < 1) throw ConfigError("search.n_trials must be >= 1");
}

void parse_interpret_section(const json& j, RunConfig& cfg) {
    check_keys(j, {"lambda", "layer", "n_images"}, "interpret");
    if (j.contains("lambda")) cfg.lambda = j["lambda"];
    if (j.contains("layer")) cfg.layer = j["layer"];
    if (j.contains("n_images")) cfg.n_images = j["n_images"];
    if (cfg.lambda < 0.0) throw ConfigError("interpret.lambda must be >= 0");
    if (cfg.n_images < 1) throw ConfigError("interpret.n_images must be >= 1");
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    check_keys(j, {"seed", "output_dir", "data", "model", "train", "search", "interpret"},
               "(root)");
    RunConfig cfg;
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"];
    if (j.contains("data")) parse_data_section(j["data"], cfg);
    if (j.contains("model")) {
        parse_model_section(j["model"], cfg);
    } else {
        cfg.model.arch = model::Arch::TinyCnn;
    }
    if (j.contains("train")) parse_train_section(j["train"], cfg);
    if (j.contains("search")) parse_search_section(j["search"], cfg);
    if (j.contains("interpret")) parse_interpret_section(j["interpret"], cfg);
    // model defaults follow the data section when unspecified
    if (!j.contains("model") || !j["model"].contains("num_classes")) {
        cfg.model.num_classes = cfg.synthetic.classes;
    }
    if (!j.contains("model") || !j["model"].contains("input_shape")) {
        if (cfg.data_source == "synthetic") {
            cfg.model.in_c = cfg.synthetic.channels;
            cfg.model.in_h = cfg.model.in_w = cfg.synthetic.image_size;
        }
    }
    if (cfg.model.seed == 0) cfg.model.seed = cfg.seed;
    if (cfg.train.seed == 0) cfg.train.seed = cfg.seed;
    return cfg;
}

// ------------------------------------------------------------------- data --

std::pair<data::Dataset, data::Dataset> load_splits(const RunConfig& cfg) {
    data::Dataset full;
    if (cfg.data_source == "synthetic") {
        full = data::generate_synthetic(cfg.synthetic);
    } else {
        if (cfg.data_path.empty()) throw ConfigError("data.path required for cifar sources");
        auto variant = cfg.data_source == "cifar10" ? data::CifarVariant::Cifar10
                                                    : data::CifarVariant::Cifar100;
        full = data::load_cifar_binary(cfg.data_path, variant);
    }
    return data::split(full, cfg.val_fraction, Rng::mix(cfg.seed, Rng::hash_str("val_split")));
}

// -------------------------------------------------------------- artifacts --

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << text;
}

void write_run_meta(const std::string& out_dir, const std::string& command) {
    auto now = std::chrono::system_clock::now().time_since_epoch();
    json meta;
    meta["command"] = command;
    meta["unix_time"] =
        std::chrono::duration_cast<std::chrono::seconds>(now).count();
    write_text(out_dir + "/run_meta.json", meta.dump(2) + "\n");
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

model::ModelSpec arm_spec(const RunConfig& cfg, const std::string& arm) {
    model::ModelSpec spec = cfg.model;
    if (arm == "baseline") {
        spec.insertions.clear();
    } else if (spec.insertions.empty()) {
        // The attzoom arm needs at least one insertion; default to stage 1.
        spec.insertions.push_back({1, {}});
    }
    return spec;
}

void save_checkpoint(const std::string& dir, const model::Model& m,
                     const data::NormStats& norm) {
    m.save(dir);
    write_text(dir + "/norm.json", norm.to_json() + "\n");
}

std::pair<model::Model, data::NormStats> load_checkpoint(const std::string& dir) {
    if (!fs::exists(dir + "/spec.json")) {
        throw IoError("missing checkpoint: " + dir);
    }
    model::Model m = model::Model::load(dir);
    std::ifstream is(dir + "/norm.json");
    if (!is) throw IoError("missing checkpoint norm stats: " + dir + "/norm.json");
    std::stringstream ss;
    ss << is.rdbuf();
    return {std::move(m), data::NormStats::from_json(ss.str())};
}

// --------------------------------------------------------------- commands --

struct ArmOutcome {
    double top1 = 0.0;
    double top5 = 0.0;
    int best_epoch = 0;
    int epochs_ran = 0;
};

int cmd_train(const RunConfig& cfg, const std::string& arm_flag) {
    fs::create_directories(cfg.output_dir);
    auto [train_set, val_set] = load_splits(cfg);
    log_info("train split " + std::to_string(train_set.size()) + ", val split " +
             std::to_string(val_set.size()));

    std::vector<std::string> arms;
    if (arm_flag == "both") {
        arms = {"baseline", "attzoom"};
    } else {
        arms = {arm_flag};
    }

    json metrics;
    std::vector<std::pair<std::string, ArmOutcome>> outcomes;
    for (const auto& arm : arms) {
        model::ModelSpec spec = arm_spec(cfg, arm);
        model::Model m = model::Model::build(spec);
        log_info(arm + ": " + std::to_string(m.param_count()) + " parameters");
        optim::TrainResult tr = optim::train(m, train_set, val_set, cfg.train);

        std::string arm_dir = cfg.output_dir + "/" + arm;
        fs::create_directories(arm_dir);
        write_text(arm_dir + "/log.ndjson", tr.log.to_ldjson());
        save_checkpoint(arm_dir + "/checkpoint", m, tr.norm);

        ArmOutcome out;
        const auto& best = tr.log.epochs[static_cast<size_t>(tr.log.best_epoch - 1)];
        out.top1 = best.val_top1;
        out.top5 = best.val_top5;
        out.best_epoch = tr.log.best_epoch;
        out.epochs_ran = static_cast<int>(tr.log.epochs.size());
        outcomes.emplace_back(arm, out);
        json jm;
        jm["top1"] = out.top1;
        jm["top5"] = out.top5;
        jm["best_epoch"] = out.best_epoch;
        jm["epochs_ran"] = out.epochs_ran;
        metrics[arm] = jm;
    }

    std::ostringstream table;
    table << "arm        top1     top5     best_epoch\n";
    for (const auto& [arm, out] : outcomes) {
        table << arm << std::string(arm.size() < 10 ? 11 - arm.size() : 1, ' ')
              << fmt4(out.top1) << "   " << fmt4(out.top5) << "   " << out.best_epoch << "\n";
    }
    if (outcomes.size() == 2) {
        double d1 = outcomes[1].second.top1 - outcomes[0].second.top1;
        double d5 = outcomes[1].second.top5 - outcomes[0].second.top5;
        table << "delta      " << (d1 >= 0 ? "+" : "") << fmt4(d1) << "  "
              << (d5 >= 0 ? "+" : "") << fmt4(d5) << "\n";
    }
    std::fputs(table.str().c_str(), stdout);
    write_text(cfg.output_dir + "/summary.txt", table.str());
    write_text(cfg.output_dir + "/metrics.json", metrics.dump(2) + "\n");
    write_run_meta(cfg.output_dir, "train");
    return 0;
}

int cmd_search(const RunConfig& cfg, int jobs) {
    fs::create_directories(cfg.output_dir);
    auto [train_set, val_set] = load_splits(cfg);

    search::SearchOptions opts;
    opts.n_trials = cfg.n_trials;
    opts.max_epochs_per_trial = cfg.max_epochs_per_trial;
    opts.search_seed = cfg.seed;
    opts.paired = cfg.paired;
    opts.jobs = jobs;

    auto result = search::run_search(arm_spec(cfg, "baseline"), arm_spec(cfg, "attzoom"),
                                     train_set, val_set, cfg.space, opts);

    std::ostringstream csv;
    search::write_leaderboard_csv(csv, result);
    write_text(cfg.output_dir + "/leaderboard.csv", csv.str());
    for (size_t t = 0; t < result.logs_baseline.size(); ++t) {
        write_text(cfg.output_dir + "/trial" + std::to_string(t) + "_baseline.ndjson",
                   result.logs_baseline[t].to_ldjson());
        write_text(cfg.output_dir + "/trial" + std::to_string(t) + "_attzoom.ndjson",
                   result.logs_attzoom[t].to_ldjson());
    }
    std::printf("best baseline top1 %s (trial %d)\n", fmt4(result.best_baseline.top1).c_str(),
                result.best_baseline.config.trial_index);
    std::printf("best attzoom  top1 %s (trial %d)\n", fmt4(result.best_attzoom.top1).c_str(),
                result.best_attzoom.config.trial_index);
    write_run_meta(cfg.output_dir, "search");
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
    fs::create_directories(cfg.output_dir);
    auto [m, norm] = load_checkpoint(checkpoint);
    auto [train_set, val_set] = load_splits(cfg);
    const data::Dataset& ds = split == "train" ? train_set : val_set;
    int topk = std::min(5, ds.classes);
    optim::Metrics metrics = optim::evaluate(m, ds, norm, topk);

    json j;
    j["split"] = split;
    j["top1"] = metrics.top1;
    j["top5"] = metrics.top5;
    j["per_class"] = metrics.per_class;
    write_text(cfg.output_dir + "/eval_metrics.json", j.dump(2) + "\n");
    std::printf("top1 %s  top5 %s\n", fmt4(metrics.top1).c_str(), fmt4(metrics.top5).c_str());
    write_run_meta(cfg.output_dir, "eval");
    return 0;
}

int cmd_visualize(const RunConfig& cfg, const std::string& checkpoint) {
    fs::create_directories(cfg.output_dir + "/vis");
    auto [m, norm] = load_checkpoint(checkpoint);
    auto [train_set, val_set] = load_splits(cfg);
    if (val_set.size() < cfg.n_images) {
        throw ConfigError("interpret.n_images exceeds the validation split size");
    }
    bool has_attzoom = !m.spec().insertions.empty();
    std::string cam_layer = cfg.layer.empty() ? m.default_cam_layer() : cfg.layer;

    json index = json::array();
    for (int i = 0; i < cfg.n_images; ++i) {
        auto [img, labels] = data::take(val_set, {static_cast<i64>(i)});
        int label = labels[0];
        Tensor input = norm.apply(img);

        json entry;
        entry["sample"] = i;
        entry["class"] = label;
        entry["model"] = model::arch_to_string(m.spec().arch);

        interpret::SaliencyMap cam = interpret::grad_cam(m, input, label, cam_layer);
        std::string cam_file = "vis/gradcam_" + std::to_string(i) + ".ppm";
        interpret::write_saliency(cam, cfg.output_dir + "/" + cam_file);
        entry["gradcam"] = cam_file;

        if (has_attzoom) {
            ad::Tape tape;
            auto fwd = m.forward(tape, input, false, true);
            interpret::SaliencyMap heat = interpret::attention_heatmap(fwd.attention.front());
            std::string heat_file = "vis/heatmap_" + std::to_string(i) + ".ppm";
            interpret::write_saliency(heat, cfg.output_dir + "/" + heat_file);
            entry["heatmap"] = heat_file;
        }

        auto [warped, grid] = interpret::warp_image(img, cam, cfg.lambda);
        std::string warp_file = "vis/warp_" + std::to_string(i) + ".ppm";
        interpret::write_image(warped, cfg.output_dir + "/" + warp_file);
        entry["warp"] = warp_file;
        entry["lambda"] = cfg.lambda;
        entry["layer"] = cam_layer;
        index.push_back(entry);
        log_debug("visualized sample " + std::to_string(i));
    }
    write_text(cfg.output_dir + "/vis/index.json", index.dump(2) + "\n");
    std::printf("wrote %d visualization sets under %s/vis\n", cfg.n_images,
                cfg.output_dir.c_str());
    write_run_meta(cfg.output_dir, "visualize");
    return 0;
}

int cmd_gradcheck() {
    auto entries = ad::gradient_selfcheck();
    double worst = 0.0;
    std::string worst_name;
    for (const auto& e : entries) {
        std::printf("%-24s max rel error %.3e (%lld elements)\n", e.name.c_str(),
                    e.report.max_rel_error,
                    static_cast<long long>(e.report.elements_checked));
        if (e.report.max_rel_error > worst) {
            worst = e.report.max_rel_error;
            worst_name = e.name;
        }
    }
    std::printf("overall max rel error %.3e (%s)\n", worst, worst_name.c_str());
    if (worst > 1e-6) {
        std::fprintf(stderr, "gradient check FAILED: %s exceeds 1e-6\n", worst_name.c_str());
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-Zoom training, search, and interpretability toolkit"};
    app.require_subcommand(1);

    std::string config_path, arm = "both", out_override, checkpoint, eval_split = "val";
    int jobs = 1;
    std::uint64_t seed_override = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "run config JSON");
        if (needs_config) opt->required();
        cmd->add_option("--out", out_override, "output directory override");
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](std::uint64_t v) {
                seed_override = v;
                seed_given = true;
            },
            "global seed override");
    };

    auto* train = app.add_subcommand("train", "train one or both arms");
    add_common(train, true);
    train->add_option("--arm", arm, "baseline, attzoom, or both")
        ->check(CLI::IsMember({"baseline", "attzoom", "both"}));

    auto* srch = app.add_subcommand("search", "two-arm random hyperparameter search");
    add_common(srch, true);
    srch->add_option("--jobs", jobs, "parallel trial workers")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    eval->add_option("--split", eval_split, "train or val")
        ->check(CLI::IsMember({"train", "val"}));

    auto* vis = app.add_subcommand("visualize", "emit grad-cam / heatmap / warp images");
    add_common(vis, true);
    vis->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
    add_common(gc, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gc->parsed()) return cmd_gradcheck();

        RunConfig cfg = parse_run_config(config_path);
        if (seed_given) {
            cfg.seed = seed_override;
            cfg.model.seed = seed_override;
            cfg.train.seed = seed_override;
        }
        if (!out_override.empty()) cfg.output_dir = out_override;
        if (cfg.output_dir.empty()) {
            throw ConfigError("output_dir missing (config key or --out)");
        }

        if (train->parsed()) return cmd_train(cfg, arm);
        if (srch->parsed()) return cmd_search(cfg, jobs);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint, eval_split);
        if (vis->parsed()) return cmd_visualize(cfg, checkpoint);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
