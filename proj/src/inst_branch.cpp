#include "rts/inst_branch.hpp"

#include <algorithm>
#include <cmath>

#include "rts/errors.hpp"

namespace rts::inst {

namespace {

using kernels::ConvGeometry;

ConvGeometry filter_geometry(const ag::Var& kappa) {
    if (kappa.value().rank() != 4 || kappa.dim(0) != 1 || kappa.dim(2) != kappa.dim(3))
        throw ConfigError("instance filter must be [1, C, k, k]");
    return ConvGeometry::same(kappa.dim(2));
}

void check_problem(const ClfProblem& p) {
    if (p.samples() == 0) throw EmptyMemory("instance memory is empty");
    if (static_cast<int>(p.sample_weights.size()) != p.samples())
        throw ConfigError("instance problem: one sample weight per memory entry required");
    if (p.labels.size() != static_cast<std::size_t>(p.samples()) * p.features.dim(2) * p.features.dim(3))
        throw ConfigError("instance labels do not match the feature grid");
}

Tensor sample_weight_map(const ClfProblem& p) {
    Tensor out(p.labels.shape());
    const std::size_t chunk = out.size() / p.sample_weights.size();
    for (std::size_t n = 0; n < p.sample_weights.size(); ++n)
        std::fill(out.data() + n * chunk, out.data() + (n + 1) * chunk, p.sample_weights[n]);
    return out;
}

}  // namespace

GaussianLabel make_gaussian_label(Point center, double sigma, int h, int w) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian label sigma must be positive");
    if (h < 1 || w < 1) throw ConfigError("gaussian label grid must be at least 1x1");
    GaussianLabel label{Tensor({h, w}), center, sigma};
    const double denom = 2.0 * sigma * sigma;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double dr = i - center.row;
            const double dc = j - center.col;
            label.map.at(i, j) = std::exp(-(dr * dr + dc * dc) / denom);
        }
    return label;
}

double label_sigma(Size2 target_in_patch, int stride, double min_sigma, double max_sigma) {
    const double s = 0.25 * std::sqrt(target_in_patch.h * target_in_patch.w) / stride;
    return std::clamp(s, min_sigma, max_sigma);
}

ag::Var hinge_residual(const ag::Var& scores, const Tensor& labels, double fg_threshold) {
    if (scores.value().size() != labels.size()) throw ConfigError("hinge residual: score/label size mismatch");
    Tensor fg(scores.shape()), bg(scores.shape()), neg_label(scores.shape());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool is_fg = labels[i] >= fg_threshold;
        fg[i] = is_fg ? 1.0 : 0.0;
        bg[i] = is_fg ? 0.0 : 1.0;
        neg_label[i] = -labels[i];
    }
    const ag::Var fg_part = ag::mul_const(ag::add_const(scores, neg_label), fg);
    const ag::Var bg_part = ag::mul_const(ag::relu(scores), bg);
    return ag::add(fg_part, bg_part);
}

ClfProblem make_clf_problem(const ClfMemory& memory, double fg_threshold) {
    if (memory.empty()) throw EmptyMemory("instance memory is empty");
    std::vector<ag::Var> feats;
    for (const auto& e : memory.entries()) feats.push_back(e.sample.features);
    ClfProblem p;
    p.features = ag::concat_batch(feats);
    const int N = p.features.dim(0), H = p.features.dim(2), W = p.features.dim(3);
    p.labels = Tensor({N, 1, H, W});
    for (int n = 0; n < N; ++n) {
        const Tensor& m = memory.entries()[n].sample.label.map;
        if (m.rank() != 2 || m.dim(0) != H || m.dim(1) != W) throw ConfigError("instance label does not match features");
        std::copy(m.data(), m.data() + m.size(), p.labels.data() + static_cast<std::size_t>(n) * H * W);
    }
    p.sample_weights = memory.weights();
    p.fg_threshold = fg_threshold;
    return p;
}

ClfModelParams zero_clf_model(int feature_dim, int kernel) {
    return {ag::Var::constant(Tensor({1, feature_dim, kernel, kernel}))};
}

ag::Var inst_objective(const ag::Var& kappa, const ClfProblem& problem, double lambda) {
    check_problem(problem);
    const ag::Var scores = ag::conv2d(problem.features, kappa, filter_geometry(kappa));
    const ag::Var r = hinge_residual(scores, problem.labels, problem.fg_threshold);
    const ag::Var data = ag::sum(ag::mul_const(ag::square(r), sample_weight_map(problem)));
    return ag::add(data, ag::mul_scalar(ag::sum_squares(kappa), 0.5 * lambda));
}

SolveResult solve_inst_model(const ClfProblem& problem, const ag::Var& kappa_init, int n_iter, double lambda) {
    if (n_iter < 0) throw ConfigError("iteration count must be non-negative");
    SolveResult result;
    result.iterates.push_back(kappa_init);
    if (n_iter == 0) return result;
    check_problem(problem);

    const ConvGeometry geom = filter_geometry(kappa_init);
    const Tensor sw = sample_weight_map(problem);
    ag::Var kappa = kappa_init;
    ag::Var scores = ag::conv2d(problem.features, kappa, geom);

    for (int it = 0; it < n_iter; ++it) {
        const ag::Var r = hinge_residual(scores, problem.labels, problem.fg_threshold);
        // Jacobian of r w.r.t. the scores: 1 on foreground and on active background cells.
        Tensor active(scores.shape());
        for (std::size_t i = 0; i < active.size(); ++i)
            active[i] = (problem.labels[i] >= problem.fg_threshold || scores.value()[i] > 0.0) ? sw[i] : 0.0;

        const ag::Var grad = ag::add(ag::mul_scalar(ag::conv2d_weight_grad(problem.features, ag::mul_const(r, sw), geom), 2.0),
                                     ag::mul_scalar(kappa, lambda));
        const ag::Var grad_scores = ag::conv2d(problem.features, grad, geom);
        const ag::Var grad_norm2 = ag::sum_squares(grad);
        const ag::Var curvature = ag::add(ag::mul_scalar(ag::sum(ag::mul_const(ag::square(grad_scores), active)), 2.0),
                                          ag::mul_scalar(grad_norm2, lambda));

        const bool degenerate = !(curvature.item() > kMinCurvature) || grad_norm2.item() == 0.0;
        ag::BranchTrace::record(&degenerate, sizeof degenerate);
        if (degenerate) {
            ++result.skipped_steps;
            result.iterates.push_back(kappa);
            continue;
        }
        const ag::Var alpha = ag::div(grad_norm2, curvature);
        kappa = ag::sub(kappa, ag::scale(grad, alpha));
        scores = ag::sub(scores, ag::scale(grad_scores, alpha));
        result.iterates.push_back(kappa);
    }
    return result;
}

ScoreMap inst_model_apply(const ClfModelParams& kappa, const ClfFeatures& features) {
    const ag::Var& f = kappa.filter;
    if (features.map.value().rank() != 4 || f.value().rank() != 4 || f.dim(1) != features.map.dim(1))
        throw ConfigError("instance model expects " + std::to_string(f.dim(1)) + " feature channels, got " +
                          shape_str(features.map.shape()));
    return {ag::conv2d(features.map, f, filter_geometry(f))};
}

Peak peak_confidence(const Tensor& scores) {
    const int H = scores.dim(-2), W = scores.dim(-1);
    if (scores.size() != static_cast<std::size_t>(H) * W) throw ConfigError("peak_confidence expects a single map");
    Peak p{scores[0], 0, 0};
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const double v = scores[static_cast<std::size_t>(i) * W + j];
            if (v > p.value) p = {v, i, j};
        }
    return p;
}

}  // namespace rts::inst
