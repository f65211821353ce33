#pragma once

#include <vector>

#include "rts/features.hpp"
#include "rts/memory.hpp"
#include "rts/nn.hpp"

namespace rts {

/// Iterates of an unrolled learner: iterates[0] is the initial estimate,
/// iterates.back() the result.
struct SolveResult {
    std::vector<ag::Var> iterates;
    int skipped_steps = 0;

    const ag::Var& final() const { return iterates.back(); }
};

/// Curvature below which a steepest-descent step is treated as degenerate.
inline constexpr double kMinCurvature = 1e-12;

namespace seg {

struct SegModelParams {
    ag::Var filter;  // [E, C_s, k, k]
};

struct MaskEncoding {
    ag::Var map;  // [1, E, H_s, W_s]
};

struct SegSample {
    ag::Var features;  // [1, C_s, H_s, W_s]
    ag::Var label;     // [1, 1, crop_h, crop_w] mask probabilities
};

using SegMemory = SampleMemory<SegSample>;

/// Weighted ridge problem solved by the few-shot learner:
///   1/2 sum_n s_n || W_n * (conv(X_n, tau) - E_n) ||^2 + lambda/2 ||tau||^2
struct SegProblem {
    ag::Var features;  // X [N, C_s, H, W]
    ag::Var targets;   // E(y) [N, E, H, W]
    ag::Var weights;   // W(y) [N, 1, H, W], non-negative
    std::vector<double> sample_weights;  // s_n

    int samples() const { return features.defined() ? features.dim(0) : 0; }
};

SegModelParams zero_seg_model(int label_dim, int feature_dim, int kernel);

ag::Var seg_objective(const ag::Var& tau, const SegProblem& problem, const ag::Var& lambda);
/// Analytic gradient of seg_objective with respect to tau.
ag::Var seg_objective_gradient(const ag::Var& tau, const SegProblem& problem, const ag::Var& lambda);

/// Unrolled steepest descent with the exact step length for the quadratic.
SolveResult solve_seg_model(const SegProblem& problem, const ag::Var& tau_init, int n_iter, const ag::Var& lambda);

MaskEncoding seg_model_apply(const SegModelParams& tau, const SegFeatures& features);

/// Label encoder E: mask pooled to stride 16, then two 3x3 convolutions.
class LabelGenerator {
public:
    LabelGenerator() = default;
    LabelGenerator(nn::ParamStore& store, int label_dim, int feature_stride, nn::Rng& rng);
    ag::Var operator()(const ag::Var& masks) const;  // [N,1,h,w] -> [N,E,h/16,w/16]

private:
    nn::Conv2d first_, second_;
    int stride_ = 16;
};

/// Weight predictor W: like E but single-channel with a soft-plus output.
class WeightPredictor {
public:
    WeightPredictor() = default;
    WeightPredictor(nn::ParamStore& store, int feature_stride, nn::Rng& rng);
    ag::Var operator()(const ag::Var& masks) const;  // [N,1,h,w] -> [N,1,h/16,w/16]

private:
    nn::Conv2d first_, second_;
    int stride_ = 16;
};

SegProblem make_seg_problem(const SegMemory& memory, const LabelGenerator& labels, const WeightPredictor& weights);

}  // namespace seg
}  // namespace rts
