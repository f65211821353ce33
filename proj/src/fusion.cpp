#include "rts/fusion.hpp"

#include "rts/errors.hpp"

namespace rts::fusion {

using kernels::ConvGeometry;

ScoreEncoder::ScoreEncoder(nn::ParamStore& store, int channels, nn::Rng& rng) {
    input_ = nn::Conv2d(store, "score_encoder.conv_in", 1, channels, ConvGeometry::same(3), rng);
    for (int i = 0; i < 4; ++i)
        residual_[i] = nn::Conv2d(store, "score_encoder.res" + std::to_string(i / 2 + 1) + ".conv" + std::to_string(i % 2 + 1),
                                  channels, channels, ConvGeometry::same(3), rng);
    // Zero start: an untrained encoder leaves the mask encoding untouched.
    output_ = nn::Conv2d(store, "score_encoder.conv_out", channels, kScoreEncodingChannels, ConvGeometry::same(3), rng,
                         true, true);
}

ScoreEncoding ScoreEncoder::operator()(const inst::ScoreMap& scores) const {
    if (scores.map.value().rank() != 4 || scores.map.dim(1) != 1) throw ConfigError("score map must be [1, 1, H, W]");
    ag::Var x = ag::max_pool3(input_(scores.map));
    for (int b = 0; b < 2; ++b) {
        const ag::Var h = residual_[2 * b + 1](ag::relu(residual_[2 * b](x)));
        x = ag::relu(ag::add(x, h));
    }
    return {output_(x)};
}

FusedEncoding fuse(const seg::MaskEncoding& mask_encoding, const ScoreEncoding& scores) {
    const Shape& m = mask_encoding.map.shape();
    const Shape& e = scores.map.shape();
    if (m.size() != 4 || e.size() != 4 || m[1] != e[1] || m[2] != 2 * e[2] || m[3] != 2 * e[3])
        throw ConfigError("cannot fuse mask encoding " + shape_str(m) + " with score encoding " + shape_str(e));
    return {ag::add(mask_encoding.map, ag::resize_bilinear(scores.map, m[2], m[3]))};
}

FusedEncoding unconditioned(const seg::MaskEncoding& mask_encoding) { return {mask_encoding.map}; }

SegDecoder::SegDecoder(nn::ParamStore& store, int input_channels, const std::array<int, 4>& widths,
                       const std::array<int, 3>& skip_channels, nn::Rng& rng) {
    int in = input_channels;
    for (int b = 0; b < 4; ++b) {
        const int skip = b < 3 ? skip_channels[b] : 0;
        blocks_[b] = nn::Conv2d(store, "decoder.block" + std::to_string(b + 1), in + skip, widths[b], ConvGeometry::same(3), rng);
        in = widths[b];
    }
    head_ = nn::Conv2d(store, "decoder.head", in, 1, ConvGeometry::same(3), rng);
}

SegLogits SegDecoder::operator()(const FusedEncoding& x_f, const BackboneFeatures& bb) const {
    static constexpr int kSkipStrides[3] = {16, 8, 4};
    ag::Var x = x_f.map;
    for (int b = 0; b < 4; ++b) {
        if (b < 3) {
            const ag::Var& skip = bb.level(kSkipStrides[b]);
            if (skip.dim(2) != x.dim(2) || skip.dim(3) != x.dim(3))
                throw ConfigError("decoder input " + shape_str(x.shape()) + " does not match skip level " +
                                  shape_str(skip.shape()));
            x = ag::concat_channels(x, skip);
        }
        x = ag::relu(blocks_[b](x));
        x = ag::resize_bilinear(x, 2 * x.dim(2), 2 * x.dim(3));
    }
    SegLogits out;
    out.logits = head_(x);
    const ag::Var probs = ag::sigmoid(ag::detach(out.logits));
    out.probs = probs.value().reshaped({out.logits.dim(2), out.logits.dim(3)});
    return out;
}

}  // namespace rts::fusion
