#pragma once

#include <string>
#include <vector>

#include "rts/model.hpp"

namespace rts::train {

/// One training frame, already cropped around the (possibly jittered) target.
struct TrainFrame {
    SearchPatch patch;
    Tensor mask;    // [h, w] ground truth in patch space, values in {0, 1}
    Point center;   // target center, patch pixels
    Size2 size;     // target extent, patch pixels
    int frame_index = 0;
};

struct TrainSequence {
    std::vector<TrainFrame> frames;

    /// Throws InvalidSequence unless J >= 2, indices strictly increase and crops agree.
    void validate() const;
};

/// Step decay: lr = base * gamma^(number of milestones <= step).
struct LrSchedule {
    double base_lr = 1e-3;
    double gamma = 0.2;
    std::vector<int> milestones;

    double at(int step) const;
    /// 200 epochs with decay 0.2 after epochs 25, 115 and 160.
    static LrSchedule long_schedule(int steps_per_epoch, double base_lr = 1e-3);
};

struct Hyperparams {
    double eta = 10.0;
    double lambda_c = 0.01;
    double fg_threshold = 0.05;
    int clf_iter = 10;  // N_iter
    int seg_init_iter = 20;
    int seg_update_iter = 3;
    LrSchedule schedule;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct FrameLoss {
    int frame_index = 0;
    double seg = 0.0;
    double clf = 0.0;
    double iou = 0.0;  // thresholded prediction vs ground truth, patch space
};

struct LossReport {
    double seg_loss = 0.0;
    double clf_loss = 0.0;
    double total = 0.0;
    std::vector<FrameLoss> frames;
    int clf_solves = 0;
    int seg_solves = 0;

    double mean_iou() const;
};

/// Lovasz hinge on one map of logits against a binary mask (gt >= 0.5 is
/// foreground). For an all-background mask the mean soft-plus of the logits is
/// returned instead.
ag::Var lovasz_hinge(const ag::Var& logits, const Tensor& gt);

/// Mean squared hinge residual of one score map.
ag::Var clf_map_loss(const ag::Var& scores, const Tensor& labels, double fg_threshold);

double total_loss(double seg, double clf, double eta);
ag::Var total_loss(const ag::Var& seg, const ag::Var& clf, double eta);

struct SequenceLosses {
    ag::Var seg;  // sum over test frames of the Lovasz loss
    ag::Var clf;  // sum over test frames of the iterate-averaged hinge loss
    LossReport report;
};

/// Runs the within-sequence protocol: frame 0 seeds both memories and fits
/// tau^0 and kappa^0; each later frame is segmented with tau^{j-1} and the
/// fixed kappa^0 scores, then its predicted mask refits tau^j.
SequenceLosses sequence_losses(const Network& net, const TrainSequence& seq, const Hyperparams& hp,
                               bool conditioning = true);

ag::Var seq_seg_loss(const Network& net, const TrainSequence& seq, const Hyperparams& hp);
ag::Var seq_clf_loss(const Network& net, const TrainSequence& seq, const Hyperparams& hp);

class Adam {
public:
    Adam(const nn::ParamStore& params, const Hyperparams& hp);

    /// Applies one update from the gradients currently stored on the parameters.
    void step(nn::ParamStore& params, double lr);
    int steps() const { return t_; }

    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(int t, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// One Adam step on the total loss averaged over the batch. Throws
/// NonFiniteLoss (parameters untouched) if the loss or a gradient is not finite.
LossReport train_step(Network& net, const std::vector<TrainSequence>& batch, Adam& adam, const Hyperparams& hp);

/// Cropping parameters for building training sequences from full frames.
struct CropSpec {
    double area_factor = 6.0;
    Resolution resolution{192, 192};
    double center_jitter = 0.25;  // fraction of the target's max extent, test frames only
    double scale_jitter = 0.1;    // relative size perturbation, test frames only
};

/// Crops frames[picks[k]] around boxes[picks[k]]; frame 0 is centered exactly.
TrainSequence make_train_sequence(const std::vector<Frame>& frames, const std::vector<Tensor>& masks,
                                  const std::vector<BBox>& boxes, const std::vector<int>& picks, const CropSpec& crop,
                                  nn::Rng& rng);

}  // namespace rts::train
