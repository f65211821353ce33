#include "rts/seg_branch.hpp"

#include <cmath>

#include "rts/errors.hpp"

namespace rts::seg {

namespace {

using kernels::ConvGeometry;

ConvGeometry filter_geometry(const ag::Var& tau) {
    if (tau.value().rank() != 4 || tau.dim(2) != tau.dim(3)) throw ConfigError("segmentation filter must be [E, C, k, k]");
    return ConvGeometry::same(tau.dim(2));
}

void check_problem(const SegProblem& p) {
    if (p.samples() == 0) throw EmptyMemory("segmentation memory is empty");
    if (static_cast<int>(p.sample_weights.size()) != p.samples())
        throw ConfigError("segmentation problem: one sample weight per memory entry required");
}

// Per-sample weights s_n broadcast to the shape of a [N, C, H, W] map.
Tensor broadcast_sample_weights(const std::vector<double>& s, const Shape& shape) {
    Tensor out(shape);
    const std::size_t chunk = out.size() / s.size();
    for (std::size_t n = 0; n < s.size(); ++n) std::fill(out.data() + n * chunk, out.data() + (n + 1) * chunk, s[n]);
    return out;
}

}  // namespace

SegModelParams zero_seg_model(int label_dim, int feature_dim, int kernel) {
    return {ag::Var::constant(Tensor({label_dim, feature_dim, kernel, kernel}))};
}

ag::Var seg_objective(const ag::Var& tau, const SegProblem& problem, const ag::Var& lambda) {
    check_problem(problem);
    const ag::Var residual = ag::sub(ag::conv2d(problem.features, tau, filter_geometry(tau)), problem.targets);
    const ag::Var weighted = ag::mul_channel_broadcast(residual, problem.weights);
    const Tensor s = broadcast_sample_weights(problem.sample_weights, weighted.shape());
    const ag::Var data = ag::sum(ag::mul_const(ag::square(weighted), s));
    return ag::mul_scalar(ag::add(data, ag::scale(ag::sum_squares(tau), lambda)), 0.5);
}

ag::Var seg_objective_gradient(const ag::Var& tau, const SegProblem& problem, const ag::Var& lambda) {
    check_problem(problem);
    const ConvGeometry g = filter_geometry(tau);
    const ag::Var residual = ag::sub(ag::conv2d(problem.features, tau, g), problem.targets);
    const ag::Var w2 = ag::square(problem.weights);
    const ag::Var r = ag::mul_channel_broadcast(residual, w2);
    const Tensor s = broadcast_sample_weights(problem.sample_weights, r.shape());
    return ag::add(ag::conv2d_weight_grad(problem.features, ag::mul_const(r, s), g), ag::scale(tau, lambda));
}

SolveResult solve_seg_model(const SegProblem& problem, const ag::Var& tau_init, int n_iter, const ag::Var& lambda) {
    if (n_iter < 0) throw ConfigError("iteration count must be non-negative");
    SolveResult result;
    result.iterates.push_back(tau_init);
    if (n_iter == 0) return result;
    check_problem(problem);

    const ConvGeometry geom = filter_geometry(tau_init);
    const ag::Var w2 = ag::square(problem.weights);
    ag::Var tau = tau_init;
    // Scores are tracked incrementally: conv(X, tau - a g) = conv(X, tau) - a conv(X, g).
    ag::Var scores = ag::conv2d(problem.features, tau, geom);
    const Tensor s = broadcast_sample_weights(problem.sample_weights, scores.shape());

    for (int it = 0; it < n_iter; ++it) {
        const ag::Var residual = ag::sub(scores, problem.targets);
        const ag::Var weighted_res = ag::mul_const(ag::mul_channel_broadcast(residual, w2), s);
        const ag::Var grad = ag::add(ag::conv2d_weight_grad(problem.features, weighted_res, geom), ag::scale(tau, lambda));

        const ag::Var grad_scores = ag::conv2d(problem.features, grad, geom);
        const ag::Var grad_norm2 = ag::sum_squares(grad);
        const ag::Var curvature =
            ag::add(ag::sum(ag::mul_const(ag::mul_channel_broadcast(ag::square(grad_scores), w2), s)),
                    ag::scale(grad_norm2, lambda));

        const bool degenerate = !(curvature.item() > kMinCurvature) || grad_norm2.item() == 0.0;
        ag::BranchTrace::record(&degenerate, sizeof degenerate);
        if (degenerate) {
            ++result.skipped_steps;
            result.iterates.push_back(tau);
            continue;
        }
        const ag::Var alpha = ag::div(grad_norm2, curvature);
        tau = ag::sub(tau, ag::scale(grad, alpha));
        scores = ag::sub(scores, ag::scale(grad_scores, alpha));
        result.iterates.push_back(tau);
    }
    return result;
}

MaskEncoding seg_model_apply(const SegModelParams& tau, const SegFeatures& features) {
    const ag::Var& f = tau.filter;
    if (features.map.value().rank() != 4 || f.value().rank() != 4 || f.dim(1) != features.map.dim(1))
        throw ConfigError("segmentation model expects " + std::to_string(f.dim(1)) + " feature channels, got " +
                          shape_str(features.map.shape()));
    return {ag::conv2d(features.map, f, filter_geometry(f))};
}

LabelGenerator::LabelGenerator(nn::ParamStore& store, int label_dim, int feature_stride, nn::Rng& rng)
    : stride_(feature_stride) {
    first_ = nn::Conv2d(store, "label_encoder.conv1", 1, 16, ConvGeometry::same(3), rng);
    second_ = nn::Conv2d(store, "label_encoder.conv2", 16, label_dim, ConvGeometry::same(3), rng);
}

ag::Var LabelGenerator::operator()(const ag::Var& masks) const {
    return second_(ag::relu(first_(ag::avg_pool(masks, stride_))));
}

WeightPredictor::WeightPredictor(nn::ParamStore& store, int feature_stride, nn::Rng& rng) : stride_(feature_stride) {
    first_ = nn::Conv2d(store, "weight_predictor.conv1", 1, 16, ConvGeometry::same(3), rng);
    second_ = nn::Conv2d(store, "weight_predictor.conv2", 16, 1, ConvGeometry::same(3), rng);
}

ag::Var WeightPredictor::operator()(const ag::Var& masks) const {
    return ag::softplus(second_(ag::relu(first_(ag::avg_pool(masks, stride_)))));
}

SegProblem make_seg_problem(const SegMemory& memory, const LabelGenerator& labels, const WeightPredictor& weights) {
    if (memory.empty()) throw EmptyMemory("segmentation memory is empty");
    std::vector<ag::Var> feats, masks;
    for (const auto& e : memory.entries()) {
        feats.push_back(e.sample.features);
        masks.push_back(e.sample.label);
    }
    const ag::Var label_batch = ag::concat_batch(masks);
    SegProblem p{ag::concat_batch(feats), labels(label_batch), weights(label_batch), memory.weights()};
    if (p.targets.dim(2) != p.features.dim(2) || p.targets.dim(3) != p.features.dim(3))
        throw ConfigError("label encoding grid " + shape_str(p.targets.shape()) + " does not match features " +
                          shape_str(p.features.shape()));
    return p;
}

}  // namespace rts::seg
