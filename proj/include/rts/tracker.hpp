#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rts/model.hpp"

namespace rts {

struct TrackerConfig {
    double t_sc = 0.3;  // instance confidence threshold
    double t_ss = 0.5;  // segmentation threshold
    int seg_capacity = 32;
    int clf_capacity = 50;
    double seg_learning_rate = 0.1;
    double clf_learning_rate = 0.01;
    int init_phase = 100;      // memories may be updated on every frame before this
    int refit_interval = 20;   // afterwards only on every 20th; also the refit trigger
    double area_factor = 6.0;
    Resolution crop{480, 832};
    int seg_init_iter = 20;
    int seg_refit_iter = 3;
    int clf_init_iter = 10;
    int clf_refit_iter = 2;
    double lambda_c = 0.01;
    double fg_threshold = 0.05;
    double sigma_min = 0.5;
    double sigma_max = 4.0;
    int scale_history = 60;
    double max_scale_change = 0.2;   // per side, per frame
    double lost_area_growth = 0.02;  // search area growth per consecutive lost frame
    double max_search_growth = 3.0;  // relative to the last confident size, per side
    double size_from_std = 4.0;
    double min_size = 2.0;
    double min_mass = 1e-3;
    int augmentations = 3;
    double aug_translation = 0.1;  // fraction of the crop size
    double aug_blur_min = 0.5;
    double aug_blur_max = 2.0;
    bool conditioning = true;
    bool fallback = true;
    std::uint64_t seed = 1;

    void validate() const;
};

enum class UpdateCase { a, b, c, d };
std::string to_string(UpdateCase c);

struct UpdateDecision {
    bool update_seg = false;
    bool update_clf = false;
    UpdateCase kase = UpdateCase::d;
};

/// Memory update rules: (a) confident and valid mask: both; (c) confident,
/// invalid mask: instance only; (b), (d) not confident: neither.
UpdateDecision decide_update(double peak, bool mask_valid, double t_sc, double t_ss);

struct TargetEstimate {
    Point center;
    Size2 size;
};

/// Probability-weighted center and size_factor * standard deviation per axis,
/// mapped to image coordinates. Pixels below `min_prob` carry no weight.
/// Returns none if the total weight is below `min_mass`.
std::optional<TargetEstimate> estimate_target_state(const Tensor& probs, const PatchTransform& to_image,
                                                    double size_factor = 4.0, double min_size = 2.0,
                                                    double min_mass = 1e-3, double min_prob = 0.0);

/// Tight box over {probs >= threshold}; none if the set is empty.
OptBox box_from_mask(const Tensor& probs, double threshold);

/// Pixels whose centers fall inside the box.
Tensor fill_box(const BBox& box, int height, int width);

struct InitTarget {
    std::optional<BBox> box;
    std::optional<Tensor> mask;  // [H, W]; takes precedence over the box
};

enum class StateSource { mask, instance_peak, kept };

struct FrameOutput {
    int frame_index = 0;
    Tensor mask;  // [H, W] probabilities in image space
    OptBox box;
    double confidence = 0.0;
    UpdateDecision decision;
    Point peak_location;  // instance peak in image coordinates
    Point center;         // target state after this frame
    Size2 size;
    Size2 search_size;
    StateSource source = StateSource::kept;
    bool seg_refit = false;
    bool clf_refit = false;
};

struct TrackerState {
    bool initialized = false;
    Point center;
    Size2 size;
    Size2 search_size;
    std::deque<Size2> scale_history;
    Size2 last_confident_size;
    int lost_frames = 0;
    int frame_counter = 0;
    int init_frame_index = 0;
    seg::SegMemory seg_memory;
    inst::ClfMemory clf_memory;
    seg::SegModelParams tau;
    inst::ClfModelParams kappa;
    int frames_since_seg_refit = 0;
    int frames_since_clf_refit = 0;
    bool seg_dirty = false;
    bool clf_dirty = false;
    int seg_solves = 0;
    int clf_solves = 0;
};

struct TrackerHooks {
    /// Forces an empty segmentation on the given frames (simulated decoder failure).
    std::function<bool(int frame_index)> suppress_segmentation;
};

class Tracker {
public:
    Tracker(const Network& net, TrackerConfig config);

    TrackerState initialize(const Frame& frame, const InitTarget& init) const;
    FrameOutput track(TrackerState& state, const Frame& frame, const TrackerHooks& hooks = {}) const;

    const TrackerConfig& config() const { return config_; }

private:
    struct Observation;
    Observation observe(const TrackerState& state, const Frame& frame, const TrackerHooks& hooks) const;

    const Network& net_;
    TrackerConfig config_;
};

/// Tracks a whole sequence; output 0 echoes the initialization.
std::vector<FrameOutput> run_sequence(const Tracker& tracker, const std::vector<Frame>& frames, const InitTarget& init,
                                      const TrackerHooks& hooks = {});

}  // namespace rts
