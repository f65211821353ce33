#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rts/geometry.hpp"
#include "rts/tensor.hpp"

namespace rts::eval {

/// Overlap of two boxes by continuous area; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);
/// A missing prediction scores 0.
double iou(const OptBox& pred, const BBox& gt);

/// Jaccard index of {pred >= threshold} and {gt >= threshold}; 1 if both are empty.
double mask_iou(const Tensor& pred, const Tensor& gt, double threshold);

struct Curve {
    std::vector<double> thresholds;
    std::vector<double> values;

    double mean() const;
};

/// Per-sequence predictions and ground truth. Frame 0 is the initialization
/// frame and never scored; frames without a ground-truth box are skipped.
struct SequenceResult {
    std::vector<OptBox> pred_boxes;
    std::vector<OptBox> gt_boxes;
    std::vector<Tensor> pred_masks;  // optional, same length as the boxes when present
    std::vector<Tensor> gt_masks;

    void validate() const;
    std::vector<std::size_t> scored_frames() const;
};

inline constexpr int kSuccessSamples = 21;
inline constexpr int kNormPrecisionSamples = 51;
inline constexpr double kPrecisionThresholdPx = 20.0;

/// OP(T) = fraction of values strictly greater than T for T = 0, 0.05, ..., 1.
Curve success_curve(const std::vector<double>& ious);
/// Fraction of center errors <= T for T = 0 ... 50 px.
Curve precision_curve(const std::vector<double>& center_errors);
/// Fraction of normalized center errors <= T for 51 thresholds on [0, 0.5].
Curve norm_precision_curve(const std::vector<double>& norm_errors);

struct FrameErrors {
    std::vector<double> ious;
    std::vector<double> center_errors;  // pixels, +inf for missing predictions
    std::vector<double> norm_errors;
};
FrameErrors frame_errors(const SequenceResult& result);

struct MetricReport {
    double auc = 0.0;
    double precision = 0.0;
    double norm_precision = 0.0;
    Curve success;
    Curve precision_px;
    Curve norm_precision_curve;
    std::optional<double> mean_j;
    int frames = 0;
};

MetricReport evaluate(const SequenceResult& result);

/// Mean of per-sequence curves and scalars (each sequence weighted equally).
MetricReport aggregate(const std::vector<MetricReport>& reports);

/// Flat `key value` text file plus one CSV per curve next to it.
void write_report(const MetricReport& report, const std::filesystem::path& dir, const std::string& stem = "metrics");
std::map<std::string, double> read_report(const std::filesystem::path& file);

}  // namespace rts::eval
