#include <doctest.h>

#include "rts/errors.hpp"
#include "rts/features.hpp"
#include "rts/model.hpp"
#include "support.hpp"

using namespace rts;

namespace {

Frame random_frame(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {oracle::random_tensor({3, h, w}, rng, 0.0, 1.0), 0};
}

NetConfig small_net() {
    NetConfig c;
    c.backbone_channels = {4, 6, 8, 8};
    c.seg_feature_dim = 4;
    c.clf_feature_dim = 6;
    c.score_encoder_channels = 8;
    c.decoder_channels = {8, 6, 4, 4};
    return c;
}

}  // namespace

TEST_CASE("default crop is 480x832") {
    const Frame f = random_frame(120, 200, 1);
    const SearchPatch p = crop_search_region(f, {60, 100}, {20, 30}, 6.0, {480, 832});
    CHECK(p.height() == 480);
    CHECK(p.width() == 832);
    // Square region of side 6 * max(h, w), resized anisotropically.
    CHECK(p.to_image.scale_row * 480 == doctest::Approx(180.0));
    CHECK(p.to_image.scale_col * 832 == doctest::Approx(180.0));
}

TEST_CASE("unclamped unit-scale crop reproduces the image exactly") {
    const Frame f = random_frame(64, 64, 2);
    // Target size = image / 4 with area factor 4: the crop is the whole image.
    const SearchPatch p = crop_search_region(f, {31.5, 31.5}, {16, 16}, 4.0, {64, 64});
    const Point corner0 = p.to_image.to_image({0, 0});
    const Point corner1 = p.to_image.to_image({63, 63});
    CHECK(corner0.row == doctest::Approx(0.0));
    CHECK(corner0.col == doctest::Approx(0.0));
    CHECK(corner1.row == doctest::Approx(63.0));
    CHECK(corner1.col == doctest::Approx(63.0));
    CHECK(max_abs_diff(p.pixels, f.pixels) < 1e-12);
}

TEST_CASE("crop past the left edge replicates the border column") {
    const Frame f = random_frame(32, 32, 3);
    // Side 32 at unit scale, shifted 10 px to the left of the image.
    const SearchPatch p = crop_search_region(f, {15.5, 5.5}, {8, 8}, 4.0, {32, 32});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const int src = std::clamp(j - 10, 0, 31);
                CHECK(p.pixels.at(c, i, j) == doctest::Approx(f.pixels.at(c, i, src)).epsilon(1e-12));
            }
}

TEST_CASE("patch transform round-trips") {
    const Frame f = random_frame(100, 150, 4);
    const SearchPatch p = crop_search_region(f, {40.3, 77.9}, {13.0, 21.0}, 6.0, {96, 160});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-20.0, 170.0);
    for (int k = 0; k < 100; ++k) {
        const Point q{u(rng), u(rng)};
        const Point back = p.to_image.to_image(p.to_image.to_patch(q));
        CHECK(back.row == doctest::Approx(q.row).epsilon(1e-9));
        CHECK(back.col == doctest::Approx(q.col).epsilon(1e-9));
    }
}

TEST_CASE("crop preconditions") {
    const Frame f = random_frame(64, 64, 6);
    CHECK_THROWS_AS(crop_search_region(f, {NAN, 1.0}, {8, 8}, 6.0, {64, 64}), InvalidState);
    CHECK_THROWS_AS(crop_search_region(f, {1.0, 1.0}, {8, INFINITY}, 6.0, {64, 64}), InvalidState);
    CHECK_THROWS_AS(crop_search_region(f, {1.0, 1.0}, {8, 8}, 6.0, {60, 64}), ConfigError);
    CHECK_THROWS_AS(crop_search_region(f, {1.0, 1.0}, {0, 8}, 6.0, {64, 64}), ConfigError);
}

TEST_CASE("frame validation") {
    Frame ok = random_frame(32, 32, 7);
    CHECK_NOTHROW(validate_frame(ok));
    Frame small = random_frame(31, 40, 7);
    CHECK_THROWS_AS(validate_frame(small), ConfigError);
    ok.pixels[5] = 1.5;
    CHECK_THROWS_AS(validate_frame(ok), ConfigError);
}

TEST_CASE("mask crop and paste invert each other at unit scale") {
    Tensor mask({64, 64});
    for (int r = 20; r < 30; ++r)
        for (int c = 12; c < 40; ++c) mask.at(r, c) = 1.0;
    const Frame f = random_frame(64, 64, 8);
    const SearchPatch p = crop_search_region(f, {31.5, 31.5}, {16, 16}, 4.0, {64, 64});
    const Tensor patch = crop_mask(mask, p.to_image, {64, 64});
    CHECK(max_abs_diff(patch, mask) < 1e-12);
    CHECK(max_abs_diff(paste_mask(patch, p.to_image, 64, 64), mask) < 1e-12);
}

TEST_CASE("feature shape contract for crops that are multiples of 32") {
    Network net(small_net());
    for (const Resolution r : {Resolution{32, 32}, Resolution{96, 160}, Resolution{128, 64}}) {
        const Frame f = random_frame(r.h, r.w, 9);
        const SearchPatch p = crop_search_region(f, {r.h / 2.0, r.w / 2.0}, {r.h / 6.0, r.w / 6.0}, 6.0, r);
        const BackboneFeatures bb = net.backbone(p);
        for (int s : {4, 8, 16, 32}) {
            CHECK(bb.level(s).dim(2) == r.h / s);
            CHECK(bb.level(s).dim(3) == r.w / s);
        }
        const SegFeatures xs = net.seg_features(bb);
        const ClfFeatures xc = net.clf_features(bb);
        CHECK(xs.map.shape() == Shape{1, 4, r.h / 16, r.w / 16});
        CHECK(xc.map.shape() == Shape{1, 6, r.h / 32, r.w / 32});
    }
}

TEST_CASE("default branch feature dimensions") {
    const NetConfig c;
    CHECK(c.seg_feature_dim == 16);
    CHECK(c.clf_feature_dim == 32);
}

TEST_CASE("bias-free backbone maps the zero input to zero features") {
    NetConfig c = small_net();
    c.backbone_bias = false;
    Network net(c);
    // Pixels are centered at 0.5 before the first convolution.
    SearchPatch grey{Tensor({3, 64, 64}, 0.5), {}};
    for (const auto& level : net.backbone(grey).levels)
        for (double v : level.map.value().values()) CHECK(v == 0.0);

    nn::ParamStore store;
    nn::Rng rng(1);
    const Backbone bb(store, {4, 4, 4, 4}, rng, false);
    for (const auto& level : bb(ag::Var::constant(Tensor({1, 3, 32, 32}))).levels)
        for (double v : level.map.value().values()) CHECK(v == 0.0);
}

TEST_CASE("feature extraction is deterministic") {
    Network net(small_net());
    const Frame f = random_frame(96, 96, 10);
    const SearchPatch p = crop_search_region(f, {48, 48}, {16, 16}, 6.0, {96, 96});
    const BackboneFeatures a = net.backbone(p), b = net.backbone(p);
    CHECK(net.seg_features(a).map.value().storage() == net.seg_features(b).map.value().storage());
    CHECK(net.clf_features(a).map.value().storage() == net.clf_features(b).map.value().storage());
}

TEST_CASE("missing backbone level is a configuration error") {
    Network net(small_net());
    const Frame f = random_frame(64, 64, 11);
    BackboneFeatures bb = net.backbone(crop_search_region(f, {32, 32}, {10, 10}, 6.0, {64, 64}));
    std::erase_if(bb.levels, [](const FeatureLevel& l) { return l.stride == 16; });
    CHECK_THROWS_AS(net.seg_features(bb), ConfigError);
}
