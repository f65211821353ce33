#pragma once

#include <vector>

#include "rts/features.hpp"
#include "rts/memory.hpp"
#include "rts/seg_branch.hpp"

namespace rts::inst {

struct GaussianLabel {
    Tensor map;     // [H_c, W_c]
    Point center;   // feature-cell coordinates
    double sigma = 1.0;
};

/// map[p] = exp(-|p - center|^2 / (2 sigma^2)) on an h x w grid.
GaussianLabel make_gaussian_label(Point center, double sigma, int h, int w);

/// Label width in cells for a target of the given patch-pixel size.
double label_sigma(Size2 target_in_patch, int stride, double min_sigma = 0.5, double max_sigma = 4.0);

// Cell (i, j) covers patch pixels [i*stride, (i+1)*stride); its center is cell coordinate i.
inline Point patch_to_cell(Point p, int stride) {
    return {(p.row + 0.5) / stride - 0.5, (p.col + 0.5) / stride - 0.5};
}
inline Point cell_to_patch(Point c, int stride) {
    return {(c.row + 0.5) * stride - 0.5, (c.col + 0.5) * stride - 0.5};
}

struct ClfModelParams {
    ag::Var filter;  // [1, C_c, k, k]
};

struct ScoreMap {
    ag::Var map;  // [1, 1, H_c, W_c]
};

/// Robust hinge residual: s - y where y >= fg_threshold, max(0, s) elsewhere.
ag::Var hinge_residual(const ag::Var& scores, const Tensor& labels, double fg_threshold);

struct ClfSample {
    ag::Var features;  // [1, C_c, H_c, W_c]
    GaussianLabel label;
};

using ClfMemory = SampleMemory<ClfSample>;

struct ClfProblem {
    ag::Var features;                    // [N, C_c, H, W]
    Tensor labels;                       // [N, 1, H, W]
    std::vector<double> sample_weights;  // s_n
    double fg_threshold = 0.05;

    int samples() const { return features.defined() ? features.dim(0) : 0; }
};

ClfProblem make_clf_problem(const ClfMemory& memory, double fg_threshold);

ClfModelParams zero_clf_model(int feature_dim, int kernel);

/// sum_n s_n ||r_n(kappa)||^2 + lambda/2 ||kappa||^2 with the hinge residual r.
ag::Var inst_objective(const ag::Var& kappa, const ClfProblem& problem, double lambda);

/// Steepest descent on the Gauss-Newton model of inst_objective, exact step
/// length per linearization. Returns kappa_(0) ... kappa_(n_iter).
SolveResult solve_inst_model(const ClfProblem& problem, const ag::Var& kappa_init, int n_iter, double lambda);

ScoreMap inst_model_apply(const ClfModelParams& kappa, const ClfFeatures& features);

struct Peak {
    double value = 0.0;
    int row = 0;
    int col = 0;
};

/// Maximum of a [H, W] (or [1, 1, H, W]) map; ties go to the smallest row, then column.
Peak peak_confidence(const Tensor& scores);

}  // namespace rts::inst
