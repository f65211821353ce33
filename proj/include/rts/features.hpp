#pragma once

#include <array>
#include <vector>

#include "rts/autograd.hpp"
#include "rts/geometry.hpp"
#include "rts/nn.hpp"

namespace rts {

/// RGB image stored planar [3, H, W] with values in [0, 1].
struct Frame {
    Tensor pixels;
    int frame_index = 0;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

/// Checks the Frame invariants (size >= 32x32, finite values in [0,1]).
void validate_frame(const Frame& frame);

/// Affine map between patch pixel coordinates and source image coordinates,
/// separately per axis: image = offset + scale * patch.
struct PatchTransform {
    double scale_row = 1.0;
    double scale_col = 1.0;
    double offset_row = 0.0;
    double offset_col = 0.0;

    Point to_image(Point p) const { return {offset_row + scale_row * p.row, offset_col + scale_col * p.col}; }
    Point to_patch(Point q) const { return {(q.row - offset_row) / scale_row, (q.col - offset_col) / scale_col}; }
};

struct SearchPatch {
    Tensor pixels;  // [3, crop_h, crop_w]
    PatchTransform to_image;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

inline constexpr int kMaxFeatureStride = 32;

/// Square crop of side area_factor * max(size.h, size.w) centered at `center`,
/// replicate-padded at the image border and bilinearly resampled to `out`.
SearchPatch crop_search_region(const Frame& frame, Point center, Size2 size, double area_factor, Resolution out);

/// Resamples a [H, W] image-space mask into patch space (zero outside the image).
Tensor crop_mask(const Tensor& mask, const PatchTransform& transform, Resolution out);

/// Maps patch-space probabilities back to a [H, W] image mask (zero outside the crop).
Tensor paste_mask(const Tensor& patch_probs, const PatchTransform& transform, int image_h, int image_w);

// Bilinear sample with coordinates clamped into the image (replicate edges).
double sample_clamped(const Tensor& plane, int channel, double row, double col);

struct FeatureLevel {
    int stride = 0;
    ag::Var map;  // [1, C, H/stride, W/stride]
};

struct BackboneFeatures {
    std::vector<FeatureLevel> levels;

    bool has(int stride) const;
    const ag::Var& level(int stride) const;  // throws ConfigError if absent
};

struct SegFeatures {
    ag::Var map;  // [1, C_s, H/16, W/16]
};

struct ClfFeatures {
    ag::Var map;  // [1, C_c, H/32, W/32]
};

/// Four-stage convolutional backbone producing stride 4/8/16/32 levels.
class Backbone {
public:
    Backbone() = default;
    Backbone(nn::ParamStore& store, const std::array<int, 4>& channels, nn::Rng& rng, bool with_bias);

    BackboneFeatures operator()(const SearchPatch& patch) const;
    BackboneFeatures operator()(const ag::Var& image) const;  // [1, 3, H, W], already centered

private:
    std::vector<nn::Conv2d> stage_[4];
};

/// Two-layer head turning one backbone level into branch-specific features.
class FeatureHead {
public:
    FeatureHead() = default;
    /// Reads the level at `input_stride` and average-pools it down to `output_stride`.
    FeatureHead(nn::ParamStore& store, const std::string& name, int in_channels, int out_channels, int input_stride,
                int output_stride, nn::Rng& rng);

    ag::Var operator()(const BackboneFeatures& bb) const;
    int input_stride() const { return input_stride_; }

private:
    nn::Conv2d first_, second_;
    int input_stride_ = 16;
    int output_stride_ = 16;
};

}  // namespace rts
