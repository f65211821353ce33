#include "rts/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rts/errors.hpp"

namespace rts {

void validate_frame(const Frame& frame) {
    const Tensor& p = frame.pixels;
    if (p.rank() != 3 || p.dim(0) != 3) throw ConfigError("frame pixels must be [3, H, W], got " + shape_str(p.shape()));
    if (p.dim(1) < 32 || p.dim(2) < 32) throw ConfigError("frame must be at least 32x32");
    for (double v : p.values())
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ConfigError("frame pixel outside [0, 1]");
    if (frame.frame_index < 0) throw ConfigError("negative frame index");
}

double sample_clamped(const Tensor& plane, int channel, double row, double col) {
    const int H = plane.dim(1), W = plane.dim(2);
    row = std::clamp(row, 0.0, static_cast<double>(H - 1));
    col = std::clamp(col, 0.0, static_cast<double>(W - 1));
    const int r0 = static_cast<int>(std::floor(row));
    const int c0 = static_cast<int>(std::floor(col));
    const int r1 = std::min(r0 + 1, H - 1);
    const int c1 = std::min(c0 + 1, W - 1);
    const double fr = row - r0;
    const double fc = col - c0;
    const double top = (1.0 - fc) * plane.at(channel, r0, c0) + fc * plane.at(channel, r0, c1);
    const double bot = (1.0 - fc) * plane.at(channel, r1, c0) + fc * plane.at(channel, r1, c1);
    return (1.0 - fr) * top + fr * bot;
}

SearchPatch crop_search_region(const Frame& frame, Point center, Size2 size, double area_factor, Resolution out) {
    if (!finite(center) || !finite(size)) throw InvalidState("non-finite search region center or size");
    if (!(size.h > 0.0) || !(size.w > 0.0)) throw ConfigError("search region size must be positive");
    if (!(area_factor > 0.0)) throw ConfigError("area factor must be positive");
    if (out.h <= 0 || out.w <= 0 || out.h % kMaxFeatureStride || out.w % kMaxFeatureStride)
        throw ConfigError("crop resolution must be a positive multiple of 32");

    const double side = area_factor * std::max(size.h, size.w);
    PatchTransform t;
    t.scale_row = side / out.h;
    t.scale_col = side / out.w;
    t.offset_row = center.row - side / 2.0 + 0.5 * t.scale_row;
    t.offset_col = center.col - side / 2.0 + 0.5 * t.scale_col;

    SearchPatch patch{Tensor({3, out.h, out.w}), t};
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) {
            const Point q = t.to_image({static_cast<double>(i), static_cast<double>(j)});
            for (int c = 0; c < 3; ++c) patch.pixels.at(c, i, j) = sample_clamped(frame.pixels, c, q.row, q.col);
        }
    return patch;
}

Tensor crop_mask(const Tensor& mask, const PatchTransform& t, Resolution out) {
    if (mask.rank() != 2) throw ConfigError("mask must be [H, W]");
    const int H = mask.dim(0), W = mask.dim(1);
    const Tensor plane = mask.reshaped({1, H, W});
    Tensor patch({out.h, out.w});
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) {
            const Point q = t.to_image({static_cast<double>(i), static_cast<double>(j)});
            if (q.row < -0.5 || q.col < -0.5 || q.row > H - 0.5 || q.col > W - 0.5) continue;
            patch.at(i, j) = sample_clamped(plane, 0, q.row, q.col);
        }
    return patch;
}

Tensor paste_mask(const Tensor& patch_probs, const PatchTransform& t, int image_h, int image_w) {
    if (patch_probs.rank() != 2) throw ConfigError("patch probabilities must be [h, w]");
    const int h = patch_probs.dim(0), w = patch_probs.dim(1);
    const Tensor plane = patch_probs.reshaped({1, h, w});
    Tensor mask({image_h, image_w});
    for (int r = 0; r < image_h; ++r)
        for (int c = 0; c < image_w; ++c) {
            const Point p = t.to_patch({static_cast<double>(r), static_cast<double>(c)});
            if (p.row < -0.5 || p.col < -0.5 || p.row > h - 0.5 || p.col > w - 0.5) continue;
            mask.at(r, c) = sample_clamped(plane, 0, p.row, p.col);
        }
    return mask;
}

bool BackboneFeatures::has(int stride) const {
    return std::any_of(levels.begin(), levels.end(), [stride](const FeatureLevel& l) { return l.stride == stride; });
}

const ag::Var& BackboneFeatures::level(int stride) const {
    for (const FeatureLevel& l : levels)
        if (l.stride == stride) return l.map;
    throw ConfigError("backbone level with stride " + std::to_string(stride) + " is not available");
}

Backbone::Backbone(nn::ParamStore& store, const std::array<int, 4>& channels, nn::Rng& rng, bool with_bias) {
    using kernels::ConvGeometry;
    int in = 3;
    for (int s = 0; s < 4; ++s) {
        const std::string base = "backbone.stage" + std::to_string(s + 1);
        const int out = channels[s];
        stage_[s].emplace_back(store, base + ".down", in, out, ConvGeometry::strided(3, 2), rng, with_bias);
        if (s == 0) stage_[s].emplace_back(store, base + ".down2", out, out, ConvGeometry::strided(3, 2), rng, with_bias);
        stage_[s].emplace_back(store, base + ".conv", out, out, ConvGeometry::same(3), rng, with_bias);
        in = out;
    }
}

BackboneFeatures Backbone::operator()(const SearchPatch& patch) const {
    const int h = patch.height(), w = patch.width();
    if (h % kMaxFeatureStride || w % kMaxFeatureStride) throw ConfigError("patch size must be a multiple of 32");
    Tensor x = patch.pixels.reshaped({1, 3, h, w});
    for (double& v : x.values()) v -= 0.5;
    return (*this)(ag::Var::constant(std::move(x)));
}

BackboneFeatures Backbone::operator()(const ag::Var& image) const {
    BackboneFeatures out;
    ag::Var x = image;
    int stride = 1;
    for (int s = 0; s < 4; ++s) {
        for (const nn::Conv2d& conv : stage_[s]) {
            stride *= conv.geometry.stride;
            x = ag::relu(conv(x));
        }
        out.levels.push_back({stride, x});
    }
    return out;
}

FeatureHead::FeatureHead(nn::ParamStore& store, const std::string& name, int in_channels, int out_channels,
                         int input_stride, int output_stride, nn::Rng& rng)
    : input_stride_(input_stride), output_stride_(output_stride) {
    using kernels::ConvGeometry;
    if (input_stride <= 0 || output_stride % input_stride)
        throw ConfigError(name + ": input stride " + std::to_string(input_stride) + " cannot feed output stride " +
                          std::to_string(output_stride));
    const int hidden = std::max(out_channels, 32);
    first_ = nn::Conv2d(store, name + ".conv1", in_channels, hidden, ConvGeometry::same(3), rng);
    second_ = nn::Conv2d(store, name + ".conv2", hidden, out_channels, ConvGeometry::same(3), rng);
}

ag::Var FeatureHead::operator()(const BackboneFeatures& bb) const {
    ag::Var x = bb.level(input_stride_);
    if (output_stride_ != input_stride_) x = ag::avg_pool(x, output_stride_ / input_stride_);
    return second_(ag::relu(first_(x)));
}

}  // namespace rts
