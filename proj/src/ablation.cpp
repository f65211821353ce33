#include "rts/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "rts/errors.hpp"

namespace rts {

eval::SequenceResult to_result(const std::vector<FrameOutput>& outputs, const BenchmarkSequence& seq) {
    eval::SequenceResult r;
    for (const auto& o : outputs) {
        r.pred_boxes.push_back(o.box);
        if (!seq.gt_masks.empty()) r.pred_masks.push_back(o.mask);
    }
    r.gt_boxes = seq.gt_boxes;
    r.gt_masks = seq.gt_masks;
    return r;
}

eval::MetricReport run_suite(const Network& net, const TrackerConfig& config, const BenchmarkSuite& suite) {
    if (suite.sequences.empty()) throw ConfigError("suite '" + suite.name + "' has no sequences");
    const Tracker tracker(net, config);
    std::vector<eval::MetricReport> reports;
    for (const auto& seq : suite.sequences) {
        TrackerHooks hooks;
        if (!seq.suppress_seg.empty())
            hooks.suppress_segmentation = [&seq](int frame) { return seq.suppress_seg.count(frame) > 0; };
        reports.push_back(eval::evaluate(to_result(run_sequence(tracker, seq.frames, seq.init, hooks), seq)));
    }
    return eval::aggregate(reports);
}

std::set<int> scripted_seg_failure(int length) {
    std::set<int> frames;
    for (int t = 10; t < std::min(25, length); ++t) frames.insert(t);
    return frames;
}

BenchmarkSequence synthetic_benchmark(const std::string& name, const synth::SyntheticScene& scene, std::uint64_t seed,
                                      std::set<int> suppress_seg) {
    auto s = synth::gen_synthetic_sequence(scene, seed);
    BenchmarkSequence b;
    b.name = name;
    b.frames = std::move(s.frames);
    b.init.box = s.boxes.front();
    b.gt_boxes = std::move(s.boxes);
    b.gt_masks = std::move(s.masks);
    b.suppress_seg = std::move(suppress_seg);
    return b;
}

std::vector<BenchmarkSuite> synthetic_suites(std::uint64_t seed, int count) {
    BenchmarkSuite moving{"moving", {}}, distractor{"distractor", {}}, failure{"seg-failure", {}};
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const std::string tag = std::to_string(s);
        moving.sequences.push_back(synthetic_benchmark("moving-" + tag, synth::moving_shape_scene(s), s));
        distractor.sequences.push_back(synthetic_benchmark("distractor-" + tag, synth::distractor_scene(s), s));
        const auto scene = synth::fallback_scene(s);
        failure.sequences.push_back(
            synthetic_benchmark("seg-failure-" + tag, scene, s, scripted_seg_failure(scene.length)));
    }
    return {moving, distractor, failure};
}

AblationAxis parse_axis(const std::string& name) {
    if (name == "conditioning") return AblationAxis::conditioning;
    if (name == "fallback") return AblationAxis::fallback;
    if (name == "tsc") return AblationAxis::tsc;
    if (name == "all") return AblationAxis::all;
    throw ConfigError("unknown ablation axis '" + name + "' (expected conditioning, fallback, tsc or all)");
}

std::string to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::conditioning: return "conditioning";
        case AblationAxis::fallback: return "fallback";
        case AblationAxis::tsc: return "tsc";
        case AblationAxis::all: return "all";
    }
    return "?";
}

std::vector<std::vector<AblationRow>> ablation_plan(AblationAxis axis) {
    const std::vector<AblationRow> cond{{false, true, 0.3, {}}, {true, true, 0.3, {}}};
    const std::vector<AblationRow> fb{{true, false, 0.3, {}}, {true, true, 0.3, {}}};
    const std::vector<AblationRow> tsc{{true, true, 0.2, {}}, {true, true, 0.3, {}}, {true, true, 0.4, {}}};
    switch (axis) {
        case AblationAxis::conditioning: return {cond};
        case AblationAxis::fallback: return {fb};
        case AblationAxis::tsc: return {tsc};
        case AblationAxis::all: return {cond, fb, tsc};
    }
    return {};
}

AblationTable run_ablation(const Network& net, const TrackerConfig& base, const std::vector<BenchmarkSuite>& suites,
                           AblationAxis axis) {
    if (suites.empty()) throw ConfigError("ablation needs at least one suite");
    AblationTable table;
    for (const auto& s : suites) table.suites.push_back(s.name);
    table.blocks = ablation_plan(axis);
    for (auto& block : table.blocks) {
        for (auto& row : block) {
            TrackerConfig cfg = base;
            cfg.conditioning = row.conditioning;
            cfg.fallback = row.fallback;
            cfg.t_sc = row.t_sc;
            cfg.validate();
            for (const auto& suite : suites) row.per_suite.push_back(run_suite(net, cfg, suite));
        }
    }
    return table;
}

std::string format_table(const AblationTable& table) {
    std::ostringstream out;
    char buf[64];
    const int suite_width = 23;
    std::string head1 = "Cond.  Inst. Branch  t_sc  |";
    std::string head2 = "       Fallback            |";
    for (const auto& name : table.suites) {
        std::snprintf(buf, sizeof buf, " %-*s|", suite_width - 2, name.c_str());
        head1 += buf;
        head2 += "   AUC     P       NP   |";
    }
    const std::string rule(head1.size(), '-');
    out << head1 << '\n' << head2 << '\n' << rule << '\n';
    for (std::size_t b = 0; b < table.blocks.size(); ++b) {
        if (b > 0) out << rule << '\n';
        for (const auto& row : table.blocks[b]) {
            std::snprintf(buf, sizeof buf, "%-5s  %-12s  %.2f  |", row.conditioning ? "yes" : "no",
                          row.fallback ? "yes" : "no", row.t_sc);
            out << buf;
            for (const auto& m : row.per_suite) {
                std::snprintf(buf, sizeof buf, " %5.1f  %5.1f  %5.1f   |", 100.0 * m.auc, 100.0 * m.precision,
                              100.0 * m.norm_precision);
                out << buf;
            }
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace rts
