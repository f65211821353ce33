#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rts/features.hpp"
#include "rts/geometry.hpp"

namespace rts::synth {

enum class ShapeKind { rectangle, ellipse };

/// Linear motion with exponential size change: at frame t the shape is centered
/// at start + t * velocity with size * scale_rate^t.
struct Trajectory {
    Point start;
    Point velocity;
    Size2 size;
    double scale_rate = 1.0;

    Point center_at(int t) const;
    Size2 size_at(int t) const;
};

/// Half-open frame interval [begin, end).
struct FrameSpan {
    int begin = 0;
    int end = 0;
    bool contains(int t) const { return t >= begin && t < end; }
};

struct SyntheticScene {
    ShapeKind shape = ShapeKind::rectangle;
    int height = 240;
    int width = 320;
    int length = 60;
    Trajectory target;
    std::array<double, 3> color{0.9, 0.35, 0.15};
    std::vector<FrameSpan> occlusions;  // target hidden on these frames
    std::optional<Trajectory> distractor;  // same shape and color, drawn below the target
    double noise = 0.02;

    void validate() const;
};

struct SyntheticSequence {
    std::vector<Frame> frames;
    std::vector<Tensor> masks;   // [H, W] in {0, 1}, visible target pixels only
    std::vector<OptBox> boxes;   // tight boxes of the masks, none when hidden
};

/// Deterministic in (scene, seed); the seed drives the background and noise.
SyntheticSequence gen_synthetic_sequence(const SyntheticScene& scene, std::uint64_t seed);

/// Rasterizes one shape: pixel (r, c) is inside if its center lies in the shape.
Tensor rasterize(ShapeKind shape, Point center, Size2 size, int height, int width);

// Scene presets shared by the CLI and the acceptance suite.
/// A shape moving at constant velocity; trajectory randomized by the seed.
SyntheticScene moving_shape_scene(std::uint64_t seed, int length = 60);
/// As above plus an identical distractor passing close to the target.
SyntheticScene distractor_scene(std::uint64_t seed, int length = 60);
/// A fast-moving target used to exercise the instance-branch fallback.
SyntheticScene fallback_scene(std::uint64_t seed, int length = 40);

}  // namespace rts::synth
