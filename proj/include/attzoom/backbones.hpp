#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attzoom/attzoom.hpp"
#include "attzoom/autodiff.hpp"
#include "attzoom/tensor.hpp"

namespace az::model {

enum class Arch { TinyCnn, MiniResnet, MiniSeResnet };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch a);

// AttZoom inserted after the given stage's output.
struct Insertion {
    int stage = 0;
    attzoom::AttZoomConfig config;
};

struct ModelSpec {
    Arch arch = Arch::TinyCnn;
    int num_classes = 10;
    i64 in_c = 3;
    i64 in_h = 32;
    i64 in_w = 32;
    std::vector<Insertion> insertions;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static ModelSpec from_json(const std::string& text);
};

struct SEBlockSpec {
    i64 ratio = 16;
    i64 hidden(i64 channels) const { return std::max<i64>(4, channels / ratio); }
};

class Model {
  public:
    // Deterministic from spec: each parameter stream is seeded by
    // (spec.seed, parameter group name), so two specs differing only in
    // insertions share bitwise-identical backbone parameters.
    static Model build(const ModelSpec& spec);

    struct Forward {
        ad::NodePtr logits;
        std::map<std::string, ad::NodePtr> param_nodes;
        std::vector<std::pair<std::string, ad::NodePtr>> activations;
        std::vector<attzoom::AttentionRecord> attention;  // one per insertion, in stage order
    };

    Forward forward(ad::Tape& tape, const Tensor& input, bool requires_grad,
                    bool want_attention = false) const;

    const ModelSpec& spec() const { return spec_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }

    i64 param_count() const;
    std::string summary() const;

    // Layer the Grad-CAM defaults to: the stage right after the last AttZoom
    // insertion, or the last conv stage without insertions.
    std::string default_cam_layer() const;

    void save(const std::string& dir) const;
    static Model load(const std::string& dir);

  private:
    ModelSpec spec_;
    std::map<std::string, Tensor> params_;
    int num_stages_ = 0;
};

}  // namespace az::model
