#include "rts/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "rts/errors.hpp"

namespace rts::eval {

double iou(const BBox& a, const BBox& b) {
    const double iw = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double ih = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const OptBox& pred, const BBox& gt) { return pred ? iou(*pred, gt) : 0.0; }

double mask_iou(const Tensor& pred, const Tensor& gt, double threshold) {
    if (pred.shape() != gt.shape())
        throw ConfigError("mask_iou: shape " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] >= threshold, g = gt[i] >= threshold;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double Curve::mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

void SequenceResult::validate() const {
    if (pred_boxes.size() != gt_boxes.size()) throw ConfigError("prediction and ground-truth lengths differ");
    if (!pred_masks.empty() && pred_masks.size() != pred_boxes.size())
        throw ConfigError("predicted masks do not cover every frame");
    if (!gt_masks.empty() && gt_masks.size() != gt_boxes.size())
        throw ConfigError("ground-truth masks do not cover every frame");
}

std::vector<std::size_t> SequenceResult::scored_frames() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < gt_boxes.size(); ++i)
        if (gt_boxes[i] && gt_boxes[i]->w > 0.0 && gt_boxes[i]->h > 0.0) out.push_back(i);
    return out;
}

namespace {

Curve sweep(const std::vector<double>& values, int samples, double max_threshold, bool strict_greater) {
    Curve c;
    for (int k = 0; k < samples; ++k) {
        const double t = max_threshold * k / (samples - 1);
        std::size_t hits = 0;
        for (double v : values) hits += strict_greater ? (v > t) : (v <= t);
        c.thresholds.push_back(t);
        c.values.push_back(values.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(values.size()));
    }
    return c;
}

}  // namespace

Curve success_curve(const std::vector<double>& ious) { return sweep(ious, kSuccessSamples, 1.0, true); }
Curve precision_curve(const std::vector<double>& errors) { return sweep(errors, 51, 50.0, false); }
Curve norm_precision_curve(const std::vector<double>& errors) {
    return sweep(errors, kNormPrecisionSamples, 0.5, false);
}

FrameErrors frame_errors(const SequenceResult& result) {
    result.validate();
    constexpr double inf = std::numeric_limits<double>::infinity();
    FrameErrors e;
    for (std::size_t i : result.scored_frames()) {
        const BBox& gt = *result.gt_boxes[i];
        const OptBox& pred = result.pred_boxes[i];
        e.ious.push_back(iou(pred, gt));
        if (!pred) {
            e.center_errors.push_back(inf);
            e.norm_errors.push_back(inf);
            continue;
        }
        const Point pc = pred->center(), gc = gt.center();
        const double dr = pc.row - gc.row, dc = pc.col - gc.col;
        e.center_errors.push_back(std::hypot(dr, dc));
        e.norm_errors.push_back(std::hypot(dr / gt.h, dc / gt.w));
    }
    return e;
}

MetricReport evaluate(const SequenceResult& result) {
    const FrameErrors e = frame_errors(result);
    MetricReport r;
    r.frames = static_cast<int>(e.ious.size());
    r.success = success_curve(e.ious);
    r.auc = r.success.mean();
    r.precision_px = precision_curve(e.center_errors);
    std::size_t close = 0;
    for (double d : e.center_errors) close += d <= kPrecisionThresholdPx;
    r.precision = e.center_errors.empty() ? 0.0 : static_cast<double>(close) / static_cast<double>(e.center_errors.size());
    r.norm_precision_curve = norm_precision_curve(e.norm_errors);
    r.norm_precision = r.norm_precision_curve.mean();

    if (!result.pred_masks.empty() && !result.gt_masks.empty()) {
        double j = 0.0;
        int n = 0;
        for (std::size_t i = 1; i < result.gt_masks.size(); ++i) {
            j += mask_iou(result.pred_masks[i], result.gt_masks[i], 0.5);
            ++n;
        }
        if (n > 0) r.mean_j = j / n;
    }
    return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ConfigError("nothing to aggregate");
    MetricReport out = reports[0];
    const double n = static_cast<double>(reports.size());
    auto average_curve = [&](Curve MetricReport::*member) {
        Curve c = reports[0].*member;
        for (double& v : c.values) v = 0.0;
        for (const MetricReport& r : reports) {
            const Curve& rc = r.*member;
            if (rc.values.size() != c.values.size()) throw ConfigError("curves sampled on different grids");
            for (std::size_t k = 0; k < c.values.size(); ++k) c.values[k] += rc.values[k] / n;
        }
        return c;
    };
    out.success = average_curve(&MetricReport::success);
    out.precision_px = average_curve(&MetricReport::precision_px);
    out.norm_precision_curve = average_curve(&MetricReport::norm_precision_curve);
    out.auc = out.success.mean();
    out.norm_precision = out.norm_precision_curve.mean();
    out.precision = 0.0;
    out.frames = 0;
    double j = 0.0;
    int with_j = 0;
    for (const MetricReport& r : reports) {
        out.precision += r.precision / n;
        out.frames += r.frames;
        if (r.mean_j) {
            j += *r.mean_j;
            ++with_j;
        }
    }
    out.mean_j = with_j ? std::optional<double>(j / with_j) : std::nullopt;
    return out;
}

namespace {

void write_curve(const Curve& c, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    out << std::setprecision(17) << "threshold,value\n";
    for (std::size_t k = 0; k < c.values.size(); ++k) out << c.thresholds[k] << ',' << c.values[k] << '\n';
}

}  // namespace

void write_report(const MetricReport& r, const std::filesystem::path& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (stem + ".txt"));
    if (!out) throw ConfigError("cannot write metrics report in " + dir.string());
    out << std::setprecision(17);
    out << "auc " << r.auc << '\n';
    out << "precision " << r.precision << '\n';
    out << "norm_precision " << r.norm_precision << '\n';
    out << "frames " << r.frames << '\n';
    if (r.mean_j) out << "mean_j " << *r.mean_j << '\n';
    write_curve(r.success, dir / (stem + "_success.csv"));
    write_curve(r.precision_px, dir / (stem + "_precision.csv"));
    write_curve(r.norm_precision_curve, dir / (stem + "_norm_precision.csv"));
}

std::map<std::string, double> read_report(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read " + file.string());
    std::map<std::string, double> out;
    std::string key;
    double value;
    while (in >> key >> value) out[key] = value;
    return out;
}

}  // namespace rts::eval
