#include "rts/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rts/errors.hpp"
#include "rts/tracker.hpp"

namespace rts::synth {

Point Trajectory::center_at(int t) const { return {start.row + t * velocity.row, start.col + t * velocity.col}; }

Size2 Trajectory::size_at(int t) const {
    const double s = std::pow(scale_rate, t);
    return {size.h * s, size.w * s};
}

void SyntheticScene::validate() const {
    if (height < 32 || width < 32) throw ConfigError("synthetic frames must be at least 32x32");
    if (length < 1) throw ConfigError("synthetic sequence needs at least one frame");
    if (!(target.size.h > 0.0) || !(target.size.w > 0.0) || !(target.scale_rate > 0.0))
        throw ConfigError("synthetic target needs a positive size and scale rate");
    if (distractor && (!(distractor->size.h > 0.0) || !(distractor->size.w > 0.0) || !(distractor->scale_rate > 0.0)))
        throw ConfigError("synthetic distractor needs a positive size and scale rate");
    for (double c : color)
        if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("shape color must lie in [0, 1]");
    if (!(noise >= 0.0)) throw ConfigError("noise level must be non-negative");
    for (const FrameSpan& s : occlusions)
        if (s.end < s.begin) throw ConfigError("occlusion span ends before it begins");
}

Tensor rasterize(ShapeKind shape, Point center, Size2 size, int height, int width) {
    Tensor m({height, width});
    const double hh = size.h / 2.0, hw = size.w / 2.0;
    const int r0 = std::max(0, static_cast<int>(std::floor(center.row - hh)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(center.row + hh)));
    const int c0 = std::max(0, static_cast<int>(std::floor(center.col - hw)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(center.col + hw)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - center.row, dc = c - center.col;
            bool inside;
            if (shape == ShapeKind::rectangle)
                inside = dr >= -hh && dr < hh && dc >= -hw && dc < hw;
            else
                inside = (dr * dr) / (hh * hh) + (dc * dc) / (hw * hw) <= 1.0;
            if (inside) m.at(r, c) = 1.0;
        }
    return m;
}

SyntheticSequence gen_synthetic_sequence(const SyntheticScene& scene, std::uint64_t seed) {
    scene.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Smooth background: a diagonal blend of two muted blue/green colors.
    std::array<double, 3> a{}, b{};
    for (int c = 0; c < 3; ++c) {
        a[c] = 0.15 + 0.35 * u(rng);
        b[c] = 0.15 + 0.35 * u(rng);
    }
    a[0] *= 0.5;
    b[0] *= 0.5;
    const double angle = 2.0 * M_PI * u(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const int H = scene.height, W = scene.width;
    Tensor background({3, H, W});
    const double lo = std::min(0.0, ca * (H - 1)) + std::min(0.0, sa * (W - 1));
    const double span = std::abs(ca) * (H - 1) + std::abs(sa) * (W - 1);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double t = (ca * r + sa * c - lo) / std::max(span, 1.0);
            for (int k = 0; k < 3; ++k) background.at(k, r, c) = (1.0 - t) * a[k] + t * b[k];
        }

    SyntheticSequence seq;
    for (int t = 0; t < scene.length; ++t) {
        Tensor target = rasterize(scene.shape, scene.target.center_at(t), scene.target.size_at(t), H, W);
        const bool hidden = std::any_of(scene.occlusions.begin(), scene.occlusions.end(),
                                        [t](const FrameSpan& s) { return s.contains(t); });
        if (hidden) target.fill(0.0);
        Tensor covered = target;
        if (scene.distractor) {
            const Tensor d = rasterize(scene.shape, scene.distractor->center_at(t), scene.distractor->size_at(t), H, W);
            for (std::size_t i = 0; i < covered.size(); ++i) covered[i] = std::max(covered[i], d[i]);
        }
        Frame f{Tensor({3, H, W}), t};
        for (int k = 0; k < 3; ++k)
            for (int r = 0; r < H; ++r)
                for (int c = 0; c < W; ++c) {
                    const double base = covered.at(r, c) > 0.0 ? scene.color[k] : background.at(k, r, c);
                    f.pixels.at(k, r, c) = std::clamp(base + scene.noise * gauss(rng), 0.0, 1.0);
                }
        seq.boxes.push_back(box_from_mask(target, 0.5));
        seq.masks.push_back(std::move(target));
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

namespace {

constexpr int kPresetHeight = 240;
constexpr int kPresetWidth = 320;

// Start and end points drawn inside the frame so the whole path stays visible.
Trajectory random_path(std::mt19937_64& rng, Size2 size, int length, int height, int width) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double mr = size.h / 2.0 + 6.0, mc = size.w / 2.0 + 6.0;
    auto pick = [&] { return Point{mr + u(rng) * (height - 2 * mr), mc + u(rng) * (width - 2 * mc)}; };
    const Point s = pick();
    Point e = pick();
    // Keep the per-frame motion moderate (<= 3 px).
    const double len = std::hypot(e.row - s.row, e.col - s.col);
    const double max_len = 3.0 * (length - 1);
    if (len > max_len) e = {s.row + (e.row - s.row) * max_len / len, s.col + (e.col - s.col) * max_len / len};
    const double steps = std::max(1, length - 1);
    return {s, {(e.row - s.row) / steps, (e.col - s.col) / steps}, size, 1.0};
}

Size2 random_size(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return {std::round(26.0 + 10.0 * u(rng)), std::round(26.0 + 10.0 * u(rng))};
}

}  // namespace

SyntheticScene moving_shape_scene(std::uint64_t seed, int length) {
    std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
    SyntheticScene s;
    s.height = kPresetHeight;
    s.width = kPresetWidth;
    s.length = length;
    s.target = random_path(rng, random_size(rng), length, s.height, s.width);
    return s;
}

SyntheticScene distractor_scene(std::uint64_t seed, int length) {
    SyntheticScene s = moving_shape_scene(seed, length);
    std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // The distractor passes 1.5 target extents beside the target halfway through.
    const int meet = length / 2;
    const Point c = s.target.center_at(meet);
    const double extent = 1.5 * std::max(s.target.size.h, s.target.size.w);
    const double phi = 2.0 * M_PI * u(rng);
    Point at_meet{c.row + extent * std::sin(phi), c.col + extent * std::cos(phi)};
    at_meet.row = std::clamp(at_meet.row, s.target.size.h / 2.0, s.height - s.target.size.h / 2.0);
    at_meet.col = std::clamp(at_meet.col, s.target.size.w / 2.0, s.width - s.target.size.w / 2.0);
    const double speed = 1.0 + 1.5 * u(rng);
    const double psi = 2.0 * M_PI * u(rng);
    const Point v{speed * std::sin(psi), speed * std::cos(psi)};
    s.distractor = Trajectory{{at_meet.row - meet * v.row, at_meet.col - meet * v.col}, v, s.target.size, 1.0};
    return s;
}

SyntheticScene fallback_scene(std::uint64_t seed, int length) {
    std::mt19937_64 rng(seed ^ 0x94D049BB133111EBULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SyntheticScene s;
    s.height = 240;
    s.width = 480;
    s.length = length;
    const Size2 size = random_size(rng);
    // Horizontal sweep at 8 px per frame across the wide frame.
    const double row = 80.0 + 80.0 * u(rng);
    const double speed = 8.0;
    const double col0 = size.w / 2.0 + 12.0;
    s.target = {{row, col0}, {0.0, speed}, size, 1.0};
    return s;
}

}  // namespace rts::synth
