#include "attzoom/backbones.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attzoom/rng.hpp"

namespace az::model {

using nlohmann::json;

Arch arch_from_string(const std::string& s) {
    if (s == "tiny_cnn") return Arch::TinyCnn;
    if (s == "mini_resnet") return Arch::MiniResnet;
    if (s == "mini_se_resnet") return Arch::MiniSeResnet;
    throw ConfigError("unknown architecture: " + s);
}

std::string arch_to_string(Arch a) {
    switch (a) {
        case Arch::TinyCnn: return "tiny_cnn";
        case Arch::MiniResnet: return "mini_resnet";
        case Arch::MiniSeResnet: return "mini_se_resnet";
    }
    return "?";
}

std::string ModelSpec::to_json() const {
    json j;
    j["arch"] = arch_to_string(arch);
    j["num_classes"] = num_classes;
    j["input_shape"] = {in_c, in_h, in_w};
    j["seed"] = seed;
    j["insertions"] = json::array();
    for (const auto& ins : insertions) {
        json ji;
        ji["stage"] = ins.stage;
        ji["attzoom"] = json::parse(ins.config.to_json());
        j["insertions"].push_back(ji);
    }
    return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelSpec s;
    s.arch = arch_from_string(j.at("arch"));
    s.num_classes = j.at("num_classes");
    s.in_c = j.at("input_shape")[0];
    s.in_h = j.at("input_shape")[1];
    s.in_w = j.at("input_shape")[2];
    if (j.contains("seed")) s.seed = j["seed"];
    if (j.contains("insertions")) {
        for (const auto& ji : j["insertions"]) {
            Insertion ins;
            ins.stage = ji.at("stage");
            if (ji.contains("attzoom")) {
                ins.config = attzoom::AttZoomConfig::from_json(ji["attzoom"].dump());
            }
            s.insertions.push_back(ins);
        }
    }
    return s;
}

namespace {

// Static per-arch plan. Stage k's output is the insertion point "stage k".
struct ConvStagePlan {
    i64 out_c;
    bool pool;  // maxpool2 after relu
};
struct ResStagePlan {
    i64 out_c;
    int blocks;
    bool pool;  // maxpool2 at stage entry
};
struct StagePlan {
    bool residual;
    ConvStagePlan conv{};
    ResStagePlan res{};
};

std::vector<StagePlan> plan_for(Arch arch) {
    std::vector<StagePlan> p;
    switch (arch) {
        case Arch::TinyCnn:
            p.push_back({false, {8, true}, {}});
            p.push_back({false, {16, true}, {}});
            p.push_back({false, {32, false}, {}});
            break;
        case Arch::MiniResnet:
        case Arch::MiniSeResnet:
            p.push_back({false, {64, false}, {}});
            p.push_back({true, {}, {128, 2, true}});
            p.push_back({true, {}, {256, 2, true}});
            break;
    }
    return p;
}

bool arch_has_se(Arch arch) { return arch == Arch::MiniSeResnet; }

void init_conv(std::map<std::string, Tensor>& params, const std::string& base, i64 out_c,
               i64 in_c, i64 k, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, Rng::hash_str(base)));
    Tensor w(out_c, in_c, k, k);
    double sd = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
    for (i64 i = 0; i < w.numel(); ++i) w[i] = sd * rng.normal();
    params[base + ".W"] = std::move(w);
    params[base + ".b"] = Tensor(out_c, 1, 1, 1, 0.0);
}

void init_dense(std::map<std::string, Tensor>& params, const std::string& base, i64 out_f,
                i64 in_f, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, Rng::hash_str(base)));
    Tensor w(out_f, in_f, 1, 1);
    double sd = std::sqrt(2.0 / static_cast<double>(in_f));
    for (i64 i = 0; i < w.numel(); ++i) w[i] = sd * rng.normal();
    params[base + ".W"] = std::move(w);
    params[base + ".b"] = Tensor(out_f, 1, 1, 1, 0.0);
}

constexpr i64 kConvKernel = 3;
const SEBlockSpec kSeSpec{};

}  // namespace

Model Model::build(const ModelSpec& spec) {
    if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    Model m;
    m.spec_ = spec;
    auto plan = plan_for(spec.arch);
    m.num_stages_ = static_cast<int>(plan.size());
    for (const auto& ins : spec.insertions) {
        if (ins.stage < 0 || ins.stage >= m.num_stages_) {
            throw ConfigError("attzoom insertion at stage " + std::to_string(ins.stage) +
                              " out of range [0," + std::to_string(m.num_stages_) + ")");
        }
        ins.config.validate();
    }

    i64 c = spec.in_c;
    for (size_t k = 0; k < plan.size(); ++k) {
        std::string stage = "stage" + std::to_string(k);
        if (!plan[k].residual) {
            init_conv(m.params_, stage + ".conv", plan[k].conv.out_c, c, kConvKernel, spec.seed);
            c = plan[k].conv.out_c;
        } else {
            i64 out_c = plan[k].res.out_c;
            for (int b = 0; b < plan[k].res.blocks; ++b) {
                std::string base = stage + ".block" + std::to_string(b);
                i64 bin = (b == 0) ? c : out_c;
                init_conv(m.params_, base + ".conv1", out_c, bin, kConvKernel, spec.seed);
                init_conv(m.params_, base + ".conv2", out_c, out_c, kConvKernel, spec.seed);
                if (bin != out_c) {
                    init_conv(m.params_, base + ".proj", out_c, bin, 1, spec.seed);
                }
                if (arch_has_se(spec.arch)) {
                    i64 hidden = kSeSpec.hidden(out_c);
                    init_dense(m.params_, base + ".se.fc1", hidden, out_c, spec.seed);
                    init_dense(m.params_, base + ".se.fc2", out_c, hidden, spec.seed);
                }
            }
            c = out_c;
        }
        // Insertions consume this stage's output; channel count is preserved
        // unless the config overrides enhance_out_channels.
        for (const auto& ins : spec.insertions) {
            if (ins.stage == static_cast<int>(k)) {
                std::string prefix = "attzoom" + std::to_string(k);
                Rng rng(Rng::mix(spec.seed, Rng::hash_str(prefix)));
                attzoom::AttZoomParams p = attzoom::init_params(ins.config, c, rng);
                m.params_[prefix + ".W_A"] = p.W_A;
                m.params_[prefix + ".W_E"] = p.W_E;
                if (ins.config.has_bias) {
                    m.params_[prefix + ".b_A"] = p.b_A;
                    m.params_[prefix + ".b_E"] = p.b_E;
                }
                if (ins.config.learn_threshold) {
                    m.params_[prefix + ".threshold_logit"] = p.threshold_logit;
                }
                c = ins.config.out_channels(c);
            }
        }
    }
    init_dense(m.params_, "head.fc", spec.num_classes, c, spec.seed);

    // Shape-validate the whole thing once on a dummy sample.
    try {
        ad::Tape tape;
        Tensor dummy(1, spec.in_c, spec.in_h, spec.in_w);
        m.forward(tape, dummy, false);
    } catch (const std::exception& e) {
        throw ConfigError("model build failed for " + arch_to_string(spec.arch) +
                          " (check insertion stages): " + e.what());
    }
    return m;
}

Model::Forward Model::forward(ad::Tape& tape, const Tensor& input, bool requires_grad,
                              bool want_attention) const {
    Forward f;
    auto leaf = [&](const std::string& name) {
        auto n = tape.leaf(params_.at(name), requires_grad, name);
        f.param_nodes[name] = n;
        return n;
    };
    auto conv_layer = [&](const std::string& base, const ad::NodePtr& x, i64 out_c, i64 k) {
        auto w = leaf(base + ".W");
        auto b = leaf(base + ".b");
        return ad::conv2d(tape, x, w, b, ops::same_conv(out_c, k, k));
    };

    auto plan = plan_for(spec_.arch);
    ad::NodePtr x = tape.leaf(input, false, "input");
    f.activations.emplace_back("input", x);

    i64 c = spec_.in_c;
    for (size_t k = 0; k < plan.size(); ++k) {
        std::string stage = "stage" + std::to_string(k);
        if (!plan[k].residual) {
            x = ad::relu(tape, conv_layer(stage + ".conv", x, plan[k].conv.out_c, kConvKernel));
            if (plan[k].conv.pool) x = ad::max_pool2(tape, x);
            c = plan[k].conv.out_c;
        } else {
            if (plan[k].res.pool) x = ad::max_pool2(tape, x);
            i64 out_c = plan[k].res.out_c;
            for (int b = 0; b < plan[k].res.blocks; ++b) {
                std::string base = stage + ".block" + std::to_string(b);
                i64 bin = (b == 0) ? c : out_c;
                ad::NodePtr branch =
                    ad::relu(tape, conv_layer(base + ".conv1", x, out_c, kConvKernel));
                branch = conv_layer(base + ".conv2", branch, out_c, kConvKernel);
                if (arch_has_se(spec_.arch)) {
                    auto squeezed = ad::global_avg_pool(tape, branch);
                    auto h = ad::relu(tape, ad::dense(tape, squeezed, leaf(base + ".se.fc1.W"),
                                                      leaf(base + ".se.fc1.b")));
                    auto s = ad::sigmoid(tape, ad::dense(tape, h, leaf(base + ".se.fc2.W"),
                                                         leaf(base + ".se.fc2.b")));
                    branch = ad::scale_channels(tape, branch, s);
                }
                ad::NodePtr skip = x;
                if (bin != out_c) skip = conv_layer(base + ".proj", x, out_c, 1);
                x = ad::relu(tape, ad::add(tape, branch, skip));
            }
            c = out_c;
        }
        f.activations.emplace_back(stage, x);
        for (const auto& ins : spec_.insertions) {
            if (ins.stage == static_cast<int>(k)) {
                std::string prefix = "attzoom" + std::to_string(k);
                attzoom::AttZoomNodes nodes;
                nodes.W_A = leaf(prefix + ".W_A");
                nodes.W_E = leaf(prefix + ".W_E");
                if (ins.config.has_bias) {
                    nodes.b_A = leaf(prefix + ".b_A");
                    nodes.b_E = leaf(prefix + ".b_E");
                }
                if (ins.config.learn_threshold) {
                    nodes.threshold_logit = leaf(prefix + ".threshold_logit");
                }
                attzoom::AttentionRecord rec;
                x = attzoom::forward(tape, x, nodes, ins.config,
                                     want_attention ? &rec : nullptr);
                if (want_attention) f.attention.push_back(std::move(rec));
                f.activations.emplace_back(prefix, x);
                c = ins.config.out_channels(c);
            }
        }
    }
    x = ad::global_avg_pool(tape, x);
    f.activations.emplace_back("gap", x);
    f.logits = ad::dense(tape, x, leaf("head.fc.W"), leaf("head.fc.b"));
    f.activations.emplace_back("logits", f.logits);
    return f;
}

i64 Model::param_count() const {
    i64 n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

std::string Model::summary() const {
    ad::Tape tape;
    Tensor dummy(1, spec_.in_c, spec_.in_h, spec_.in_w);
    Forward f = forward(tape, dummy, false);
    std::ostringstream os;
    os << arch_to_string(spec_.arch) << " (" << param_count() << " parameters)\n";
    for (const auto& [name, node] : f.activations) {
        os << "  " << name << " -> " << node->value.shape_str() << "\n";
    }
    return os.str();
}

std::string Model::default_cam_layer() const {
    int last = -1;
    for (const auto& ins : spec_.insertions) last = std::max(last, ins.stage);
    auto plan = plan_for(spec_.arch);
    if (last >= 0 && last + 1 < static_cast<int>(plan.size())) {
        return "stage" + std::to_string(last + 1);
    }
    return "stage" + std::to_string(plan.size() - 1);
}

void Model::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream os(dir + "/spec.json");
    if (!os) throw IoError("cannot write " + dir + "/spec.json");
    os << spec_.to_json() << "\n";
    for (const auto& [name, t] : params_) {
        write_tensor(dir + "/" + name + ".bin", t);
    }
}

Model Model::load(const std::string& dir) {
    std::ifstream is(dir + "/spec.json");
    if (!is) throw IoError("cannot read " + dir + "/spec.json");
    std::stringstream ss;
    ss << is.rdbuf();
    Model m = build(ModelSpec::from_json(ss.str()));
    for (auto& [name, t] : m.params_) {
        t = read_tensor(dir + "/" + name + ".bin");
    }
    return m;
}

}  // namespace az::model
