#pragma once

#include <array>
#include <cstdint>

#include "rts/features.hpp"
#include "rts/fusion.hpp"
#include "rts/inst_branch.hpp"
#include "rts/seg_branch.hpp"

namespace rts {

struct NetConfig {
    std::array<int, 4> backbone_channels{16, 32, 64, 64};
    bool backbone_bias = true;
    int seg_feature_dim = 16;  // C_s
    int clf_feature_dim = 32;  // C_c
    int label_dim = 16;        // E, must match the 16-channel score encoding
    int seg_filter_size = 3;
    int clf_filter_size = 4;
    int seg_input_stride = 16;
    int clf_input_stride = 32;
    int score_encoder_channels = 64;
    std::array<int, 4> decoder_channels{64, 32, 16, 8};
    double lambda_s_init = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

inline constexpr int kSegStride = 16;
inline constexpr int kClfStride = 32;

/// Every offline-trained component, sharing one parameter store.
class Network {
public:
    explicit Network(const NetConfig& config = {});
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const NetConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    BackboneFeatures backbone(const SearchPatch& patch) const { return backbone_(patch); }
    SegFeatures seg_features(const BackboneFeatures& bb) const { return {seg_head_(bb)}; }
    ClfFeatures clf_features(const BackboneFeatures& bb) const { return {clf_head_(bb)}; }

    const seg::LabelGenerator& label_generator() const { return label_generator_; }
    const seg::WeightPredictor& weight_predictor() const { return weight_predictor_; }
    /// Learnable ridge weight of the segmentation learner, soft-plus of a raw parameter.
    ag::Var lambda_s() const;

    fusion::ScoreEncoding encode_scores(const inst::ScoreMap& s) const { return score_encoder_(s); }
    fusion::SegLogits decode(const fusion::FusedEncoding& x, const BackboneFeatures& bb) const { return decoder_(x, bb); }

    seg::SegModelParams initial_seg_model() const;
    inst::ClfModelParams initial_clf_model() const;

    /// Copies parameter values from another network with the same layout.
    void copy_from(const Network& other);

private:
    NetConfig config_;
    nn::ParamStore params_;
    Backbone backbone_;
    FeatureHead seg_head_, clf_head_;
    seg::LabelGenerator label_generator_;
    seg::WeightPredictor weight_predictor_;
    ag::Var lambda_s_raw_;
    fusion::ScoreEncoder score_encoder_;
    fusion::SegDecoder decoder_;
};

}  // namespace rts
