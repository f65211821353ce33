#include "rts/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "rts/errors.hpp"

namespace rts {

void TrackerConfig::validate() const {
    if (!(t_sc >= 0.0 && t_sc <= 1.0)) throw ConfigError("t_sc must lie in [0, 1]");
    if (!(t_ss > 0.0 && t_ss < 1.0)) throw ConfigError("t_ss must lie in (0, 1)");
    if (seg_capacity < 1 + augmentations || clf_capacity < 1 + augmentations)
        throw ConfigError("memory capacity must hold the initial sample and its augmentations");
    if (!(seg_learning_rate >= 0.0 && seg_learning_rate < 1.0) || !(clf_learning_rate >= 0.0 && clf_learning_rate < 1.0))
        throw ConfigError("memory learning rates must lie in [0, 1)");
    if (init_phase < 0 || refit_interval < 1) throw ConfigError("init_phase >= 0 and refit_interval >= 1 required");
    if (!(area_factor > 0.0)) throw ConfigError("area_factor must be positive");
    if (crop.h <= 0 || crop.w <= 0 || crop.h % kMaxFeatureStride || crop.w % kMaxFeatureStride)
        throw ConfigError("crop resolution must be a positive multiple of 32");
    if (seg_init_iter < 0 || seg_refit_iter < 0 || clf_init_iter < 0 || clf_refit_iter < 0)
        throw ConfigError("iteration counts must be non-negative");
    if (!(lambda_c >= 0.0)) throw ConfigError("lambda_c must be non-negative");
    if (!(fg_threshold >= 0.0 && fg_threshold <= 1.0)) throw ConfigError("fg_threshold must lie in [0, 1]");
    if (!(sigma_min > 0.0 && sigma_max >= sigma_min)) throw ConfigError("invalid label sigma clamp");
    if (scale_history < 1) throw ConfigError("scale history must hold at least one entry");
    if (!(max_scale_change >= 0.0 && max_scale_change < 1.0)) throw ConfigError("max_scale_change must lie in [0, 1)");
    if (!(lost_area_growth >= 0.0) || !(max_search_growth >= 1.0)) throw ConfigError("invalid search growth settings");
    if (!(size_from_std > 0.0) || !(min_size > 0.0) || !(min_mass > 0.0)) throw ConfigError("invalid state estimation constants");
    if (augmentations < 0) throw ConfigError("augmentation count must be non-negative");
    if (!(aug_translation >= 0.0 && aug_translation < 0.5)) throw ConfigError("aug_translation must lie in [0, 0.5)");
    if (!(aug_blur_min > 0.0 && aug_blur_max >= aug_blur_min)) throw ConfigError("invalid blur range");
}

std::string to_string(UpdateCase c) {
    switch (c) {
        case UpdateCase::a: return "a";
        case UpdateCase::b: return "b";
        case UpdateCase::c: return "c";
        case UpdateCase::d: return "d";
    }
    return "?";
}

UpdateDecision decide_update(double peak, bool mask_valid, double t_sc, double /*t_ss*/) {
    if (peak >= t_sc) return mask_valid ? UpdateDecision{true, true, UpdateCase::a} : UpdateDecision{false, true, UpdateCase::c};
    return {false, false, mask_valid ? UpdateCase::b : UpdateCase::d};
}

std::optional<TargetEstimate> estimate_target_state(const Tensor& probs, const PatchTransform& t, double size_factor,
                                                    double min_size, double min_mass, double min_prob) {
    const int h = probs.dim(-2), w = probs.dim(-1);
    double mass = 0.0, sr = 0.0, sc = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double p = probs[static_cast<std::size_t>(i) * w + j];
            if (p < min_prob || p <= 0.0) continue;
            mass += p;
            sr += p * i;
            sc += p * j;
        }
    if (mass < min_mass) return std::nullopt;
    const double mr = sr / mass, mc = sc / mass;
    double vr = 0.0, vc = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double p = probs[static_cast<std::size_t>(i) * w + j];
            if (p < min_prob || p <= 0.0) continue;
            vr += p * (i - mr) * (i - mr);
            vc += p * (j - mc) * (j - mc);
        }
    TargetEstimate e;
    e.center = t.to_image({mr, mc});
    e.size.h = std::max(min_size, size_factor * std::sqrt(vr / mass) * t.scale_row);
    e.size.w = std::max(min_size, size_factor * std::sqrt(vc / mass) * t.scale_col);
    return e;
}

OptBox box_from_mask(const Tensor& probs, double threshold) {
    const int h = probs.dim(-2), w = probs.dim(-1);
    int r0 = h, r1 = -1, c0 = w, c1 = -1;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (probs[static_cast<std::size_t>(i) * w + j] >= threshold) {
                r0 = std::min(r0, i);
                r1 = std::max(r1, i);
                c0 = std::min(c0, j);
                c1 = std::max(c1, j);
            }
    if (r1 < 0) return std::nullopt;
    return BBox{static_cast<double>(c0), static_cast<double>(r0), static_cast<double>(c1 - c0 + 1),
                static_cast<double>(r1 - r0 + 1)};
}

Tensor fill_box(const BBox& box, int height, int width) {
    Tensor m({height, width});
    for (int r = 0; r < height; ++r) {
        if (r + 0.5 < box.y || r + 0.5 >= box.y + box.h) continue;
        for (int c = 0; c < width; ++c)
            if (c + 0.5 >= box.x && c + 0.5 < box.x + box.w) m.at(r, c) = 1.0;
    }
    return m;
}

namespace {

struct Sample {
    Tensor pixels;  // [3, h, w]
    Tensor mask;    // [h, w]
    Point center;   // patch coordinates
};

Sample flip_vertical(const Sample& s) {
    const int h = s.mask.dim(0), w = s.mask.dim(1);
    Sample o{Tensor(s.pixels.shape()), Tensor(s.mask.shape()), {h - 1 - s.center.row, s.center.col}};
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < 3; ++c) o.pixels.at(c, i, j) = s.pixels.at(c, h - 1 - i, j);
            o.mask.at(i, j) = s.mask.at(h - 1 - i, j);
        }
    return o;
}

Sample translate(const Sample& s, int dr, int dc) {
    const int h = s.mask.dim(0), w = s.mask.dim(1);
    Sample o{Tensor(s.pixels.shape()), Tensor(s.mask.shape()), {s.center.row + dr, s.center.col + dc}};
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int si = i - dr, sj = j - dc;
            const int ci = std::clamp(si, 0, h - 1), cj = std::clamp(sj, 0, w - 1);
            for (int c = 0; c < 3; ++c) o.pixels.at(c, i, j) = s.pixels.at(c, ci, cj);
            o.mask.at(i, j) = (si == ci && sj == cj) ? s.mask.at(si, sj) : 0.0;
        }
    return o;
}

Sample blur(const Sample& s, double sigma) {
    const int h = s.mask.dim(0), w = s.mask.dim(1);
    Sample o = s;
    for (int c = 0; c < 3; ++c) {
        cv::Mat plane(h, w, CV_64F, o.pixels.data() + static_cast<std::size_t>(c) * h * w);
        cv::GaussianBlur(plane.clone(), plane, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
    }
    return o;
}

ag::Var as_batch(const Tensor& t) {
    Shape s{1};
    s.insert(s.end(), t.shape().begin(), t.shape().end());
    return ag::Var::constant(t.reshaped(s));
}

Size2 median_size(const std::deque<Size2>& history) {
    std::vector<double> hs, ws;
    for (const Size2& s : history) {
        hs.push_back(s.h);
        ws.push_back(s.w);
    }
    auto median = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    return {median(hs), median(ws)};
}

}  // namespace

Tracker::Tracker(const Network& net, TrackerConfig config) : net_(net), config_(std::move(config)) {
    config_.validate();
}

TrackerState Tracker::initialize(const Frame& frame, const InitTarget& init) const {
    validate_frame(frame);
    const TrackerConfig& cfg = config_;
    const int H = frame.height(), W = frame.width();

    Tensor mask;
    if (init.mask) {
        mask = *init.mask;
        if (mask.rank() != 2 || mask.dim(0) != H || mask.dim(1) != W) throw InvalidInit("initial mask does not match the frame");
    } else if (init.box) {
        const BBox& b = *init.box;
        if (!std::isfinite(b.x) || !std::isfinite(b.y) || !(b.w > 0.0) || !(b.h > 0.0) || !std::isfinite(b.w) ||
            !std::isfinite(b.h))
            throw InvalidInit("initial box must have a positive, finite area");
        mask = fill_box(b, H, W);
    } else {
        throw InvalidInit("no initial box or mask given");
    }
    const OptBox box = box_from_mask(mask, 0.5);
    if (!box) throw InvalidInit("initial target is empty");
    const BBox target = init.mask ? *box : *init.box;

    ag::NoGradGuard no_grad;
    TrackerState st;
    st.center = target.center();
    st.size = {target.h, target.w};
    st.search_size = st.size;
    st.last_confident_size = st.size;
    st.scale_history.push_back(st.size);
    st.init_frame_index = frame.frame_index;
    st.seg_memory = seg::SegMemory(cfg.seg_capacity, cfg.seg_learning_rate);
    st.clf_memory = inst::ClfMemory(cfg.clf_capacity, cfg.clf_learning_rate);

    const SearchPatch patch = crop_search_region(frame, st.center, st.size, cfg.area_factor, cfg.crop);
    Sample base{patch.pixels, crop_mask(mask, patch.to_image, cfg.crop), patch.to_image.to_patch(st.center)};
    const Size2 size_in_patch{st.size.h / patch.to_image.scale_row, st.size.w / patch.to_image.scale_col};

    std::vector<Sample> samples{base};
    nn::Rng rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> sigma(cfg.aug_blur_min, cfg.aug_blur_max);
    for (int k = 0; k < cfg.augmentations; ++k) {
        switch (k % 3) {
            case 0: samples.push_back(flip_vertical(base)); break;
            case 1: {
                const int dr = static_cast<int>(std::lround(unit(rng) * cfg.aug_translation * cfg.crop.h));
                const int dc = static_cast<int>(std::lround(unit(rng) * cfg.aug_translation * cfg.crop.w));
                samples.push_back(translate(base, dr, dc));
                break;
            }
            default: samples.push_back(blur(base, sigma(rng))); break;
        }
    }

    for (const Sample& s : samples) {
        const BackboneFeatures bb = net_.backbone(SearchPatch{s.pixels, patch.to_image});
        const SegFeatures xs = net_.seg_features(bb);
        const ClfFeatures xc = net_.clf_features(bb);
        st.seg_memory.insert({xs.map, as_batch(s.mask.reshaped({1, s.mask.dim(0), s.mask.dim(1)}))}, frame.frame_index);
        const double sig = inst::label_sigma(size_in_patch, kClfStride, cfg.sigma_min, cfg.sigma_max);
        st.clf_memory.insert({xc.map, inst::make_gaussian_label(inst::patch_to_cell(s.center, kClfStride), sig,
                                                                xc.map.dim(2), xc.map.dim(3))},
                             frame.frame_index);
    }

    st.tau = {seg::solve_seg_model(seg::make_seg_problem(st.seg_memory, net_.label_generator(), net_.weight_predictor()),
                                   net_.initial_seg_model().filter, cfg.seg_init_iter, net_.lambda_s())
                  .final()};
    st.kappa = {inst::solve_inst_model(inst::make_clf_problem(st.clf_memory, cfg.fg_threshold),
                                       net_.initial_clf_model().filter, cfg.clf_init_iter, cfg.lambda_c)
                    .final()};
    st.seg_solves = st.clf_solves = 1;
    st.initialized = true;
    return st;
}

struct Tracker::Observation {
    SearchPatch patch;
    SegFeatures xs;
    ClfFeatures xc;
    Tensor probs;  // [h, w]
    inst::Peak peak;
};

Tracker::Observation Tracker::observe(const TrackerState& st, const Frame& frame, const TrackerHooks& hooks) const {
    Observation ob;
    ob.patch = crop_search_region(frame, st.center, st.search_size, config_.area_factor, config_.crop);
    const BackboneFeatures bb = net_.backbone(ob.patch);
    ob.xs = net_.seg_features(bb);
    ob.xc = net_.clf_features(bb);
    const inst::ScoreMap scores = inst::inst_model_apply(st.kappa, ob.xc);
    const seg::MaskEncoding xm = seg::seg_model_apply(st.tau, ob.xs);
    const fusion::FusedEncoding xf =
        config_.conditioning ? fusion::fuse(xm, net_.encode_scores(scores)) : fusion::unconditioned(xm);
    ob.probs = net_.decode(xf, bb).probs;
    if (hooks.suppress_segmentation && hooks.suppress_segmentation(frame.frame_index)) ob.probs.fill(0.0);
    ob.peak = inst::peak_confidence(scores.map.value());
    return ob;
}

FrameOutput Tracker::track(TrackerState& st, const Frame& frame, const TrackerHooks& hooks) const {
    if (!st.initialized) throw InvalidState("tracker state is not initialized");
    validate_frame(frame);
    const TrackerConfig& cfg = config_;
    ag::NoGradGuard no_grad;

    const Observation ob = observe(st, frame, hooks);
    const PatchTransform& T = ob.patch.to_image;
    ++st.frame_counter;

    FrameOutput out;
    out.frame_index = frame.frame_index;
    out.mask = paste_mask(ob.probs, T, frame.height(), frame.width());
    out.box = box_from_mask(out.mask, cfg.t_ss);
    out.confidence = ob.peak.value;
    const Point peak_patch = inst::cell_to_patch({static_cast<double>(ob.peak.row), static_cast<double>(ob.peak.col)}, kClfStride);
    out.peak_location = T.to_image(peak_patch);

    std::optional<TargetEstimate> est;
    if (out.box) est = estimate_target_state(ob.probs, T, cfg.size_from_std, cfg.min_size, cfg.min_mass, cfg.t_ss);
    const bool mask_valid = est.has_value();
    out.decision = decide_update(ob.peak.value, mask_valid, cfg.t_sc, cfg.t_ss);

    if (mask_valid) {
        const double lo = 1.0 - cfg.max_scale_change, hi = 1.0 / (1.0 - cfg.max_scale_change);
        st.center = est->center;
        st.size = {std::clamp(est->size.h, lo * st.size.h, hi * st.size.h),
                   std::clamp(est->size.w, lo * st.size.w, hi * st.size.w)};
        out.source = StateSource::mask;
    } else if (cfg.fallback && ob.peak.value >= cfg.t_sc) {
        st.center = out.peak_location;
        out.source = StateSource::instance_peak;
    } else {
        out.source = StateSource::kept;
    }

    if (out.decision.kase == UpdateCase::a) {
        st.scale_history.push_back(st.size);
        while (static_cast<int>(st.scale_history.size()) > cfg.scale_history) st.scale_history.pop_front();
        st.last_confident_size = st.size;
    }
    if (out.source == StateSource::kept) {
        ++st.lost_frames;
        const Size2 robust = median_size(st.scale_history);
        const double g = std::sqrt(std::pow(1.0 + cfg.lost_area_growth, st.lost_frames));
        st.search_size = {std::min(robust.h * g, cfg.max_search_growth * st.last_confident_size.h),
                          std::min(robust.w * g, cfg.max_search_growth * st.last_confident_size.w)};
    } else {
        st.lost_frames = 0;
        st.search_size = st.size;
    }

    const bool may_update = st.frame_counter < cfg.init_phase || st.frame_counter % cfg.refit_interval == 0;
    if (may_update && out.decision.update_seg) {
        st.seg_memory.insert({ob.xs.map, as_batch(ob.probs.reshaped({1, ob.probs.dim(0), ob.probs.dim(1)}))},
                             frame.frame_index);
        st.seg_dirty = true;
    }
    if (may_update && out.decision.update_clf) {
        const Point label_center = out.decision.kase == UpdateCase::a ? T.to_patch(st.center) : peak_patch;
        const Size2 size_in_patch{st.size.h / T.scale_row, st.size.w / T.scale_col};
        const double sig = inst::label_sigma(size_in_patch, kClfStride, cfg.sigma_min, cfg.sigma_max);
        st.clf_memory.insert({ob.xc.map, inst::make_gaussian_label(inst::patch_to_cell(label_center, kClfStride), sig,
                                                                   ob.xc.map.dim(2), ob.xc.map.dim(3))},
                             frame.frame_index);
        st.clf_dirty = true;
    }

    ++st.frames_since_seg_refit;
    ++st.frames_since_clf_refit;
    if (st.seg_dirty && st.frames_since_seg_refit >= cfg.refit_interval) {
        st.tau = {seg::solve_seg_model(seg::make_seg_problem(st.seg_memory, net_.label_generator(), net_.weight_predictor()),
                                       st.tau.filter, cfg.seg_refit_iter, net_.lambda_s())
                      .final()};
        st.seg_dirty = false;
        st.frames_since_seg_refit = 0;
        ++st.seg_solves;
        out.seg_refit = true;
    }
    if (st.clf_dirty && st.frames_since_clf_refit >= cfg.refit_interval) {
        st.kappa = {inst::solve_inst_model(inst::make_clf_problem(st.clf_memory, cfg.fg_threshold), st.kappa.filter,
                                           cfg.clf_refit_iter, cfg.lambda_c)
                        .final()};
        st.clf_dirty = false;
        st.frames_since_clf_refit = 0;
        ++st.clf_solves;
        out.clf_refit = true;
    }

    out.center = st.center;
    out.size = st.size;
    out.search_size = st.search_size;
    return out;
}

std::vector<FrameOutput> run_sequence(const Tracker& tracker, const std::vector<Frame>& frames, const InitTarget& init,
                                      const TrackerHooks& hooks) {
    if (frames.empty()) throw InvalidSequence("cannot track an empty sequence");
    TrackerState st = tracker.initialize(frames[0], init);
    std::vector<FrameOutput> outs;
    FrameOutput first;
    first.frame_index = frames[0].frame_index;
    first.mask = init.mask ? *init.mask : fill_box(*init.box, frames[0].height(), frames[0].width());
    first.box = init.mask ? box_from_mask(first.mask, 0.5) : init.box;
    first.confidence = 1.0;
    first.decision = {true, true, UpdateCase::a};
    first.center = st.center;
    first.size = st.size;
    first.search_size = st.search_size;
    first.source = StateSource::mask;
    outs.push_back(std::move(first));
    for (std::size_t i = 1; i < frames.size(); ++i) outs.push_back(tracker.track(st, frames[i], hooks));
    return outs;
}

}  // namespace rts
