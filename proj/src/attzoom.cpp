#include "attzoom/attzoom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace az::attzoom {

using nlohmann::json;

void AttZoomConfig::validate() const {
    if (attention_kh <= 0 || attention_kh % 2 == 0 || attention_kw <= 0 ||
        attention_kw % 2 == 0) {
        throw ConfigError("attention kernel extents must be odd and positive");
    }
    if (enhance_kh <= 0 || enhance_kh % 2 == 0 || enhance_kw <= 0 || enhance_kw % 2 == 0) {
        throw ConfigError("enhancement kernel extents must be odd and positive");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold must lie in (0,1), got " + std::to_string(threshold));
    }
    if (zoom < 2) throw ConfigError("zoom multiplier must be >= 2");
    if (enhance_stride != 1 && enhance_stride != zoom) {
        throw ConfigError("enhance_stride must be 1 or the zoom multiplier");
    }
    if (enhance_out_channels < 0) throw ConfigError("enhance_out_channels must be >= 0");
}

std::string AttZoomConfig::to_json() const {
    json j;
    j["attention_kernel"] = {attention_kh, attention_kw};
    j["threshold"] = threshold;
    j["zoom"] = zoom;
    j["enhance_kernel"] = {enhance_kh, enhance_kw};
    j["enhance_stride"] = enhance_stride;
    j["enhance_out_channels"] = enhance_out_channels;
    j["learn_threshold"] = learn_threshold;
    j["straight_through"] = straight_through;
    j["has_bias"] = has_bias;
    return j.dump(2);
}

AttZoomConfig AttZoomConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    AttZoomConfig cfg;
    if (j.contains("attention_kernel")) {
        cfg.attention_kh = j["attention_kernel"][0];
        cfg.attention_kw = j["attention_kernel"][1];
    }
    if (j.contains("threshold")) cfg.threshold = j["threshold"];
    if (j.contains("zoom")) cfg.zoom = j["zoom"];
    if (j.contains("enhance_kernel")) {
        cfg.enhance_kh = j["enhance_kernel"][0];
        cfg.enhance_kw = j["enhance_kernel"][1];
    }
    if (j.contains("enhance_stride")) cfg.enhance_stride = j["enhance_stride"];
    if (j.contains("enhance_out_channels")) cfg.enhance_out_channels = j["enhance_out_channels"];
    if (j.contains("learn_threshold")) cfg.learn_threshold = j["learn_threshold"];
    if (j.contains("straight_through")) cfg.straight_through = j["straight_through"];
    if (j.contains("has_bias")) cfg.has_bias = j["has_bias"];
    cfg.validate();
    return cfg;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

void he_init(Tensor& t, i64 fan_in, Rng& rng) {
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (i64 i = 0; i < t.numel(); ++i) t[i] = std_dev * rng.normal();
}

}  // namespace

AttZoomParams init_params(const AttZoomConfig& cfg, i64 in_channels, Rng& rng) {
    cfg.validate();
    AttZoomParams p;
    p.W_A = Tensor(1, in_channels, cfg.attention_kh, cfg.attention_kw);
    he_init(p.W_A, in_channels * cfg.attention_kh * cfg.attention_kw, rng);
    i64 out_c = cfg.out_channels(in_channels);
    p.W_E = Tensor(out_c, in_channels, cfg.enhance_kh, cfg.enhance_kw);
    he_init(p.W_E, in_channels * cfg.enhance_kh * cfg.enhance_kw, rng);
    if (cfg.has_bias) {
        // Start with the gate mostly open so the layer passes signal at step 0.
        p.b_A = Tensor(1, 1, 1, 1, logit(cfg.threshold) + 1.0);
        p.b_E = Tensor(out_c, 1, 1, 1, 0.0);
    }
    if (cfg.learn_threshold) {
        p.threshold_logit = Tensor(1, 1, 1, 1, logit(cfg.threshold));
    }
    return p;
}

i64 param_count(const AttZoomConfig& cfg, i64 in_channels) {
    cfg.validate();
    i64 out_c = cfg.out_channels(in_channels);
    i64 n = in_channels * cfg.attention_kh * cfg.attention_kw +
            out_c * in_channels * cfg.enhance_kh * cfg.enhance_kw;
    if (cfg.has_bias) n += 1 + out_c;
    if (cfg.learn_threshold) n += 1;
    return n;
}

AttZoomNodes make_nodes(ad::Tape& tape, const AttZoomParams& params, const AttZoomConfig& cfg,
                        bool requires_grad, const std::string& prefix) {
    AttZoomNodes n;
    n.W_A = tape.leaf(params.W_A, requires_grad, prefix + ".W_A");
    n.W_E = tape.leaf(params.W_E, requires_grad, prefix + ".W_E");
    if (cfg.has_bias) {
        n.b_A = tape.leaf(params.b_A, requires_grad, prefix + ".b_A");
        n.b_E = tape.leaf(params.b_E, requires_grad, prefix + ".b_E");
    }
    if (cfg.learn_threshold) {
        n.threshold_logit = tape.leaf(params.threshold_logit, requires_grad,
                                      prefix + ".threshold_logit");
    }
    return n;
}

ad::NodePtr attention_map(ad::Tape& tape, const ad::NodePtr& feature, const AttZoomNodes& nodes,
                          const AttZoomConfig& cfg) {
    ops::ConvSpec spec = ops::same_conv(1, cfg.attention_kh, cfg.attention_kw, cfg.has_bias);
    return ad::conv2d(tape, feature, nodes.W_A, cfg.has_bias ? nodes.b_A : nullptr, spec);
}

ad::NodePtr forward(ad::Tape& tape, const ad::NodePtr& feature, const AttZoomNodes& nodes,
                    const AttZoomConfig& cfg, AttentionRecord* record) {
    cfg.validate();
    ad::NodePtr a = attention_map(tape, feature, nodes, cfg);
    double threshold = cfg.threshold;
    if (cfg.learn_threshold) {
        threshold = ops::sigmoid1(nodes.threshold_logit->value[0]);
    }
    ad::NodePtr gated = ad::gate(tape, a, threshold, cfg.straight_through);
    ad::NodePtr weighted = ad::mul_broadcast(tape, feature, gated);
    ad::NodePtr up = ad::upsample_zeros(tape, weighted, cfg.zoom);
    ops::ConvSpec espec{cfg.out_channels(feature->value.c()), cfg.enhance_kh, cfg.enhance_kw,
                        cfg.enhance_stride, (cfg.enhance_kh - 1) / 2, cfg.has_bias};
    // With pad (k-1)/2: stride 1 keeps (mH, mW); stride m maps back to (H, W).
    ad::NodePtr enhanced =
        ad::conv2d(tape, up, nodes.W_E, cfg.has_bias ? nodes.b_E : nullptr, espec);
    if (record != nullptr) {
        record->raw = a->value;
        const Tensor& g = gated->value;
        record->gated = g;
        Tensor mask(g.n(), g.c(), g.h(), g.w());
        for (i64 i = 0; i < g.numel(); ++i) mask[i] = (g[i] == 1.0) ? 1.0 : 0.0;
        record->clamp_mask = mask;
    }
    return enhanced;
}

void save_params(const std::string& dir, const AttZoomParams& params, const AttZoomConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_tensor(dir + "/W_A.bin", params.W_A);
    write_tensor(dir + "/W_E.bin", params.W_E);
    if (cfg.has_bias) {
        write_tensor(dir + "/b_A.bin", params.b_A);
        write_tensor(dir + "/b_E.bin", params.b_E);
    }
    if (cfg.learn_threshold) {
        write_tensor(dir + "/threshold_logit.bin", params.threshold_logit);
    }
    std::ofstream os(dir + "/config.json");
    os << cfg.to_json() << "\n";
}

AttZoomParams load_params(const std::string& dir, const AttZoomConfig& cfg) {
    AttZoomParams p;
    p.W_A = read_tensor(dir + "/W_A.bin");
    p.W_E = read_tensor(dir + "/W_E.bin");
    if (cfg.has_bias) {
        p.b_A = read_tensor(dir + "/b_A.bin");
        p.b_E = read_tensor(dir + "/b_E.bin");
    }
    if (cfg.learn_threshold) {
        p.threshold_logit = read_tensor(dir + "/threshold_logit.bin");
    }
    return p;
}

}  // namespace az::attzoom
