#include "rts/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rts/errors.hpp"
#include "rts/evalkit.hpp"

namespace rts::train {

void TrainSequence::validate() const {
    if (frames.size() < 2) throw InvalidSequence("a training sequence needs at least two frames");
    const int h = frames[0].patch.height(), w = frames[0].patch.width();
    for (std::size_t j = 0; j < frames.size(); ++j) {
        const TrainFrame& f = frames[j];
        if (j > 0 && f.frame_index <= frames[j - 1].frame_index)
            throw InvalidSequence("training frames must be sorted by strictly increasing frame index");
        if (f.patch.height() != h || f.patch.width() != w) throw InvalidSequence("training crops differ in size");
        if (f.mask.rank() != 2 || f.mask.dim(0) != h || f.mask.dim(1) != w)
            throw InvalidSequence("training mask does not match its crop");
        if (!(f.size.h > 0.0) || !(f.size.w > 0.0)) throw InvalidSequence("training target size must be positive");
    }
}

double LrSchedule::at(int step) const {
    double lr = base_lr;
    for (int m : milestones)
        if (step >= m) lr *= gamma;
    return lr;
}

LrSchedule LrSchedule::long_schedule(int steps_per_epoch, double base_lr) {
    if (steps_per_epoch <= 0) throw ConfigError("steps per epoch must be positive");
    return {base_lr, 0.2, {25 * steps_per_epoch, 115 * steps_per_epoch, 160 * steps_per_epoch}};
}

void Hyperparams::validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and non-negative");
    if (!(lambda_c >= 0.0)) throw ConfigError("lambda_c must be non-negative");
    if (!(fg_threshold >= 0.0 && fg_threshold <= 1.0)) throw ConfigError("fg_threshold must lie in [0, 1]");
    if (clf_iter < 1) throw ConfigError("N_iter must be at least 1");
    if (seg_init_iter < 0 || seg_update_iter < 0) throw ConfigError("iteration counts must be non-negative");
    if (!(schedule.base_lr >= 0.0) || !(schedule.gamma > 0.0)) throw ConfigError("invalid learning-rate schedule");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
        throw ConfigError("invalid Adam constants");
}

double LossReport::mean_iou() const {
    if (frames.empty()) return 0.0;
    double s = 0.0;
    for (const FrameLoss& f : frames) s += f.iou;
    return s / static_cast<double>(frames.size());
}

ag::Var lovasz_hinge(const ag::Var& logits, const Tensor& gt) {
    const Tensor& x = logits.value();
    if (x.size() != gt.size()) throw ConfigError("lovasz: logits " + shape_str(x.shape()) + " vs mask " + shape_str(gt.shape()));
    const std::size_t n = x.size();
    std::vector<double> sign(n), err(n);
    std::size_t fg_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool fg = gt[i] >= 0.5;
        fg_total += fg;
        sign[i] = fg ? 1.0 : -1.0;
        err[i] = 1.0 - x[i] * sign[i];
    }
    if (fg_total == 0) return ag::mean(ag::softplus(logits));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });

    // Gradient of the Lovasz extension of the Jaccard loss, in sorted order.
    std::vector<double> jac_grad(n);
    std::vector<bool> sorted_fg(n), positive(n);
    double cum_fg = 0.0, cum_bg = 0.0, prev = 0.0;
    const double gts = static_cast<double>(fg_total);
    for (std::size_t k = 0; k < n; ++k) {
        const bool fg = sign[order[k]] > 0.0;
        sorted_fg[k] = fg;
        (fg ? cum_fg : cum_bg) += 1.0;
        const double jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
        jac_grad[k] = jaccard - prev;
        prev = jaccard;
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        positive[k] = err[order[k]] > 0.0;
        if (positive[k]) loss += err[order[k]] * jac_grad[k];
    }
    // The loss is linear on each region of fixed (sorted labels, hinge pattern).
    ag::BranchTrace::record_bits(sorted_fg);
    ag::BranchTrace::record_bits(positive);

    return ag::make_op(Tensor::scalar(loss), {logits}, [order = std::move(order), jac_grad = std::move(jac_grad),
                                                        sign = std::move(sign), positive = std::move(positive)](ag::Node& node) {
        ag::Node& in = *node.parents[0];
        if (!in.requires_grad) return;
        const double up = node.grad[0];
        Tensor g(in.value.shape());
        for (std::size_t k = 0; k < order.size(); ++k)
            if (positive[k]) g[order[k]] = -sign[order[k]] * jac_grad[k] * up;
        in.accumulate(g);
    });
}

ag::Var clf_map_loss(const ag::Var& scores, const Tensor& labels, double fg_threshold) {
    return ag::mean(ag::square(inst::hinge_residual(scores, labels, fg_threshold)));
}

double total_loss(double seg, double clf, double eta) { return seg + eta * clf; }

ag::Var total_loss(const ag::Var& seg, const ag::Var& clf, double eta) {
    return ag::add(seg, ag::mul_scalar(clf, eta));
}

namespace {

inst::GaussianLabel clf_label(const TrainFrame& f, const ag::Var& clf_features) {
    const Point cell = inst::patch_to_cell(f.center, kClfStride);
    return inst::make_gaussian_label(cell, inst::label_sigma(f.size, kClfStride), clf_features.dim(2),
                                     clf_features.dim(3));
}

ag::Var mask_var(const Tensor& mask) {
    return ag::Var::constant(mask.reshaped({1, 1, mask.dim(0), mask.dim(1)}));
}

}  // namespace

SequenceLosses sequence_losses(const Network& net, const TrainSequence& seq, const Hyperparams& hp, bool conditioning) {
    seq.validate();
    hp.validate();
    const int J = static_cast<int>(seq.frames.size());
    SequenceLosses out;
    LossReport& rep = out.report;

    const TrainFrame& f0 = seq.frames[0];
    const BackboneFeatures bb0 = net.backbone(f0.patch);
    const SegFeatures xs0 = net.seg_features(bb0);
    const ClfFeatures xc0 = net.clf_features(bb0);

    seg::SegMemory seg_mem(J);
    inst::ClfMemory clf_mem(1);
    seg_mem.insert({xs0.map, mask_var(f0.mask)}, f0.frame_index);
    clf_mem.insert({xc0.map, clf_label(f0, xc0.map)}, f0.frame_index);

    const ag::Var lambda_s = net.lambda_s();
    const seg::LabelGenerator& E = net.label_generator();
    const seg::WeightPredictor& W = net.weight_predictor();
    ag::Var tau = seg::solve_seg_model(seg::make_seg_problem(seg_mem, E, W), net.initial_seg_model().filter,
                                       hp.seg_init_iter, lambda_s)
                      .final();
    ++rep.seg_solves;
    const SolveResult kappa_fit = inst::solve_inst_model(inst::make_clf_problem(clf_mem, hp.fg_threshold),
                                                         net.initial_clf_model().filter, hp.clf_iter, hp.lambda_c);
    ++rep.clf_solves;
    const inst::ClfModelParams kappa{kappa_fit.final()};

    std::vector<ag::Var> seg_terms, clf_terms;
    for (int j = 1; j < J; ++j) {
        const TrainFrame& f = seq.frames[j];
        const BackboneFeatures bb = net.backbone(f.patch);
        const SegFeatures xs = net.seg_features(bb);
        const ClfFeatures xc = net.clf_features(bb);

        const inst::GaussianLabel label = clf_label(f, xc.map);
        std::vector<ag::Var> per_iterate;
        for (const ag::Var& k : kappa_fit.iterates)
            per_iterate.push_back(clf_map_loss(inst::inst_model_apply({k}, xc).map, label.map, hp.fg_threshold));
        ag::Var clf_j = per_iterate[0];
        for (std::size_t i = 1; i < per_iterate.size(); ++i) clf_j = ag::add(clf_j, per_iterate[i]);
        clf_j = ag::mul_scalar(clf_j, 1.0 / hp.clf_iter);

        const seg::MaskEncoding xm = seg::seg_model_apply({tau}, xs);
        const fusion::FusedEncoding xf =
            conditioning ? fusion::fuse(xm, net.encode_scores(inst::inst_model_apply(kappa, xc))) : fusion::unconditioned(xm);
        const fusion::SegLogits pred = net.decode(xf, bb);
        const ag::Var seg_j = lovasz_hinge(pred.logits, f.mask);

        seg_terms.push_back(seg_j);
        clf_terms.push_back(clf_j);
        rep.frames.push_back({f.frame_index, seg_j.item(), clf_j.item(), eval::mask_iou(pred.probs, f.mask, 0.5)});

        seg_mem.insert({xs.map, ag::reshape(ag::sigmoid(pred.logits), {1, 1, f.mask.dim(0), f.mask.dim(1)})},
                       f.frame_index);
        tau = seg::solve_seg_model(seg::make_seg_problem(seg_mem, E, W), tau, hp.seg_update_iter, lambda_s).final();
        ++rep.seg_solves;
    }

    out.seg = seg_terms[0];
    out.clf = clf_terms[0];
    for (std::size_t k = 1; k < seg_terms.size(); ++k) {
        out.seg = ag::add(out.seg, seg_terms[k]);
        out.clf = ag::add(out.clf, clf_terms[k]);
    }
    rep.seg_loss = out.seg.item();
    rep.clf_loss = out.clf.item();
    rep.total = total_loss(rep.seg_loss, rep.clf_loss, hp.eta);
    return out;
}

ag::Var seq_seg_loss(const Network& net, const TrainSequence& seq, const Hyperparams& hp) {
    return sequence_losses(net, seq, hp).seg;
}

ag::Var seq_clf_loss(const Network& net, const TrainSequence& seq, const Hyperparams& hp) {
    return sequence_losses(net, seq, hp).clf;
}

Adam::Adam(const nn::ParamStore& params, const Hyperparams& hp)
    : beta1_(hp.beta1), beta2_(hp.beta2), eps_(hp.adam_eps) {
    for (const auto& [name, var] : params.items()) {
        m_.emplace_back(var.shape());
        v_.emplace_back(var.shape());
    }
}

void Adam::restore(int t, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw ConfigError("optimizer state does not match parameters");
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i].same_shape(m_[i]) || !v[i].same_shape(v_[i])) throw ConfigError("optimizer state shape mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

void Adam::step(nn::ParamStore& params, double lr) {
    const auto& items = params.items();
    if (items.size() != m_.size()) throw ConfigError("optimizer was built for a different parameter set");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < items.size(); ++i) {
        ag::Var p = items[i].second;
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Tensor& value = p.mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
        }
    }
}

LossReport train_step(Network& net, const std::vector<TrainSequence>& batch, Adam& adam, const Hyperparams& hp) {
    if (batch.empty()) throw ConfigError("empty training batch");
    nn::ParamStore& params = net.params();
    params.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    LossReport agg;
    for (const TrainSequence& seq : batch) {
        SequenceLosses sl = sequence_losses(net, seq, hp);
        const ag::Var total = total_loss(sl.seg, sl.clf, hp.eta);
        if (!std::isfinite(total.item())) {
            params.zero_grad();
            std::ostringstream msg;
            msg << "non-finite training loss (seg " << sl.report.seg_loss << ", clf " << sl.report.clf_loss << ")";
            for (const FrameLoss& f : sl.report.frames)
                msg << "; frame " << f.frame_index << ": seg " << f.seg << " clf " << f.clf;
            throw NonFiniteLoss(msg.str());
        }
        ag::backward(ag::mul_scalar(total, inv_b));
        agg.seg_loss += inv_b * sl.report.seg_loss;
        agg.clf_loss += inv_b * sl.report.clf_loss;
        agg.clf_solves += sl.report.clf_solves;
        agg.seg_solves += sl.report.seg_solves;
        agg.frames.insert(agg.frames.end(), sl.report.frames.begin(), sl.report.frames.end());
    }
    agg.total = total_loss(agg.seg_loss, agg.clf_loss, hp.eta);

    for (const auto& [name, var] : params.items())
        if (var.has_grad() && !var.grad().all_finite()) {
            params.zero_grad();
            throw NonFiniteLoss("non-finite gradient for parameter " + name);
        }
    adam.step(params, hp.schedule.at(adam.steps()));
    return agg;
}

TrainSequence make_train_sequence(const std::vector<Frame>& frames, const std::vector<Tensor>& masks,
                                  const std::vector<BBox>& boxes, const std::vector<int>& picks, const CropSpec& crop,
                                  nn::Rng& rng) {
    if (frames.size() != masks.size() || frames.size() != boxes.size())
        throw ConfigError("frames, masks and boxes must have equal length");
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    TrainSequence seq;
    for (std::size_t k = 0; k < picks.size(); ++k) {
        const int idx = picks[k];
        if (idx < 0 || idx >= static_cast<int>(frames.size())) throw ConfigError("frame pick out of range");
        const BBox& box = boxes[idx];
        if (!(box.w > 0.0) || !(box.h > 0.0)) throw InvalidSequence("training frame without a visible target");
        Point center = box.center();
        Size2 size{box.h, box.w};
        if (k > 0) {
            const double extent = std::max(box.h, box.w);
            center.row += crop.center_jitter * extent * unit(rng);
            center.col += crop.center_jitter * extent * unit(rng);
            const double s = 1.0 + crop.scale_jitter * unit(rng);
            size = {size.h * s, size.w * s};
        }
        TrainFrame f;
        f.patch = crop_search_region(frames[idx], center, size, crop.area_factor, crop.resolution);
        f.mask = crop_mask(masks[idx], f.patch.to_image, crop.resolution);
        for (double& v : f.mask.values()) v = v >= 0.5 ? 1.0 : 0.0;
        f.center = f.patch.to_image.to_patch(box.center());
        f.size = {box.h / f.patch.to_image.scale_row, box.w / f.patch.to_image.scale_col};
        f.frame_index = frames[idx].frame_index;
        seq.frames.push_back(std::move(f));
    }
    seq.validate();
    return seq;
}

}  // namespace rts::train
