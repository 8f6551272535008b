#pragma once

#include <string>

#include "attzoom/autodiff.hpp"
#include "attzoom/rng.hpp"
#include "attzoom/tensor.hpp"

namespace az::attzoom {

// Everything the layer leaves configurable: attention-conv geometry, gate
// threshold, zoom multiplier, enhancement-conv geometry.
struct AttZoomConfig {
    i64 attention_kh = 3;
    i64 attention_kw = 3;
    double threshold = 0.5;
    i64 zoom = 2;
    i64 enhance_kh = 3;
    i64 enhance_kw = 3;
    i64 enhance_stride = 1;       // 1 or zoom
    i64 enhance_out_channels = 0; // 0 means "same as input channels"
    bool learn_threshold = false;
    bool straight_through = false;
    bool has_bias = true;

    void validate() const;
    i64 out_channels(i64 in_channels) const {
        return enhance_out_channels > 0 ? enhance_out_channels : in_channels;
    }

    std::string to_json() const;
    static AttZoomConfig from_json(const std::string& text);
};

// Layer parameters. threshold_logit exists only when learn_threshold is set;
// the effective threshold is sigmoid(threshold_logit), keeping it in (0,1).
struct AttZoomParams {
    Tensor W_A;  // [1, C, KH, KW]
    Tensor b_A;  // [1,1,1,1]
    Tensor W_E;  // [C', C, k, k]
    Tensor b_E;  // [C',1,1,1]
    Tensor threshold_logit;  // [1,1,1,1], only if learn_threshold
};

// Raw attention map A, gated map f(A), and the clamp mask (1 where
// sigmoid(A) >= threshold).
struct AttentionRecord {
    Tensor raw;    // [N,1,H,W], pre-sigmoid
    Tensor gated;  // [N,1,H,W]
    Tensor clamp_mask;  // [N,1,H,W], 0/1
};

AttZoomParams init_params(const AttZoomConfig& cfg, i64 in_channels, Rng& rng);

i64 param_count(const AttZoomConfig& cfg, i64 in_channels);

// Node handles for the layer parameters inside one tape.
struct AttZoomNodes {
    ad::NodePtr W_A, b_A, W_E, b_E, threshold_logit;
};

AttZoomNodes make_nodes(ad::Tape& tape, const AttZoomParams& params, const AttZoomConfig& cfg,
                        bool requires_grad, const std::string& name_prefix);

// A = W_A * F (pre-sigmoid, stride 1, same padding).
ad::NodePtr attention_map(ad::Tape& tape, const ad::NodePtr& feature, const AttZoomNodes& nodes,
                          const AttZoomConfig& cfg);

// Full layer: attention conv -> gate -> spatial mask -> zero-insertion
// upsample -> enhancement conv. Fills *record if non-null.
ad::NodePtr forward(ad::Tape& tape, const ad::NodePtr& feature, const AttZoomNodes& nodes,
                    const AttZoomConfig& cfg, AttentionRecord* record = nullptr);

void save_params(const std::string& dir, const AttZoomParams& params, const AttZoomConfig& cfg);
AttZoomParams load_params(const std::string& dir, const AttZoomConfig& cfg);

}  // namespace az::attzoom
