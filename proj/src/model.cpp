#include "rts/model.hpp"

#include <cmath>

#include "rts/errors.hpp"

namespace rts {

namespace {

int backbone_channels_at(const NetConfig& c, int stride) {
    switch (stride) {
        case 4: return c.backbone_channels[0];
        case 8: return c.backbone_channels[1];
        case 16: return c.backbone_channels[2];
        case 32: return c.backbone_channels[3];
        default: throw ConfigError("no backbone level with stride " + std::to_string(stride));
    }
}

}  // namespace

void NetConfig::validate() const {
    for (int c : backbone_channels)
        if (c <= 0) throw ConfigError("backbone channels must be positive");
    for (int c : decoder_channels)
        if (c <= 0) throw ConfigError("decoder channels must be positive");
    if (seg_feature_dim <= 0 || clf_feature_dim <= 0) throw ConfigError("feature dimensions must be positive");
    if (label_dim != fusion::kScoreEncodingChannels)
        throw ConfigError("label dimension must equal the 16-channel score encoding");
    if (seg_filter_size <= 0 || clf_filter_size <= 0) throw ConfigError("filter sizes must be positive");
    if (score_encoder_channels <= 0) throw ConfigError("score encoder channels must be positive");
    if (!(lambda_s_init > 0.0)) throw ConfigError("lambda_s_init must be positive");
    backbone_channels_at(*this, seg_input_stride);
    backbone_channels_at(*this, clf_input_stride);
    if (kSegStride % seg_input_stride) throw ConfigError("segmentation features need an input stride dividing 16");
    if (kClfStride % clf_input_stride) throw ConfigError("instance features need an input stride dividing 32");
}

Network::Network(const NetConfig& config) : config_(config) {
    config_.validate();
    nn::Rng rng(config_.seed);
    backbone_ = Backbone(params_, config_.backbone_channels, rng, config_.backbone_bias);
    seg_head_ = FeatureHead(params_, "seg_features", backbone_channels_at(config_, config_.seg_input_stride),
                            config_.seg_feature_dim, config_.seg_input_stride, kSegStride, rng);
    clf_head_ = FeatureHead(params_, "clf_features", backbone_channels_at(config_, config_.clf_input_stride),
                            config_.clf_feature_dim, config_.clf_input_stride, kClfStride, rng);
    label_generator_ = seg::LabelGenerator(params_, config_.label_dim, kSegStride, rng);
    weight_predictor_ = seg::WeightPredictor(params_, kSegStride, rng);
    // softplus^-1(lambda)
    lambda_s_raw_ = params_.add("seg_learner.lambda_raw", Tensor::scalar(std::log(std::expm1(config_.lambda_s_init))));
    score_encoder_ = fusion::ScoreEncoder(params_, config_.score_encoder_channels, rng);
    decoder_ = fusion::SegDecoder(params_, config_.label_dim, config_.decoder_channels,
                                  {config_.backbone_channels[2], config_.backbone_channels[1], config_.backbone_channels[0]},
                                  rng);
}

ag::Var Network::lambda_s() const { return ag::softplus(lambda_s_raw_); }

seg::SegModelParams Network::initial_seg_model() const {
    return seg::zero_seg_model(config_.label_dim, config_.seg_feature_dim, config_.seg_filter_size);
}

inst::ClfModelParams Network::initial_clf_model() const {
    return inst::zero_clf_model(config_.clf_feature_dim, config_.clf_filter_size);
}

void Network::copy_from(const Network& other) {
    const auto& src = other.params().items();
    const auto& dst = params_.items();
    if (src.size() != dst.size()) throw ConfigError("network layouts differ");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape())
            throw ConfigError("network layouts differ at " + dst[i].first);
        ag::Var v = dst[i].second;
        v.mutable_value() = src[i].second.value();
    }
}

}  // namespace rts
