#pragma once

#include <array>

#include "rts/features.hpp"
#include "rts/inst_branch.hpp"
#include "rts/seg_branch.hpp"

namespace rts::fusion {

inline constexpr int kScoreEncodingChannels = 16;

struct ScoreEncoding {
    ag::Var map;  // [1, 16, H_c, W_c]
};

struct FusedEncoding {
    ag::Var map;  // [1, 16, H_s, W_s]
};

struct SegLogits {
    ag::Var logits;  // [1, 1, crop_h, crop_w]
    Tensor probs;    // [crop_h, crop_w], sigmoid(logits)
};

/// Score encoder: conv 3x3, max-pool 3x3 stride 1, two residual blocks, conv
/// 3x3 down to 16 channels. Every layer keeps the spatial size.
class ScoreEncoder {
public:
    ScoreEncoder() = default;
    ScoreEncoder(nn::ParamStore& store, int channels, nn::Rng& rng);

    ScoreEncoding operator()(const inst::ScoreMap& scores) const;

private:
    nn::Conv2d input_;
    std::array<nn::Conv2d, 4> residual_;
    nn::Conv2d output_;
};

/// x_f = x_m + bilinear_upsample(enc); the encoding must be half the size of x_m.
FusedEncoding fuse(const seg::MaskEncoding& mask_encoding, const ScoreEncoding& scores);

/// Encoding without instance conditioning (the segmentation-only pathway).
FusedEncoding unconditioned(const seg::MaskEncoding& mask_encoding);

/// U-shaped decoder: four blocks at strides 16, 8, 4, 2 with skip connections
/// from the backbone at 16/8/4, each followed by a x2 bilinear upsample, and a
/// final 3x3 projection to one logit channel at full patch resolution.
class SegDecoder {
public:
    SegDecoder() = default;
    SegDecoder(nn::ParamStore& store, int input_channels, const std::array<int, 4>& widths,
               const std::array<int, 3>& skip_channels, nn::Rng& rng);

    SegLogits operator()(const FusedEncoding& x, const BackboneFeatures& bb) const;

private:
    std::array<nn::Conv2d, 4> blocks_;
    nn::Conv2d head_;
};

}  // namespace rts::fusion
