#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "rts/evalkit.hpp"
#include "rts/model.hpp"
#include "rts/synthetic.hpp"
#include "rts/tracker.hpp"

namespace rts {

/// One evaluation sequence with everything needed to track and score it.
struct BenchmarkSequence {
    std::string name;
    std::vector<Frame> frames;
    InitTarget init;
    std::vector<OptBox> gt_boxes;
    std::vector<Tensor> gt_masks;  // may be empty
    std::set<int> suppress_seg;    // simulated decoder failures
};

struct BenchmarkSuite {
    std::string name;
    std::vector<BenchmarkSequence> sequences;
};

eval::SequenceResult to_result(const std::vector<FrameOutput>& outputs, const BenchmarkSequence& seq);

/// Runs the tracker over every sequence and averages the per-sequence metrics.
eval::MetricReport run_suite(const Network& net, const TrackerConfig& config, const BenchmarkSuite& suite);

/// Frames of the fallback scene on which the decoder output is suppressed.
std::set<int> scripted_seg_failure(int length);

BenchmarkSequence synthetic_benchmark(const std::string& name, const synth::SyntheticScene& scene, std::uint64_t seed,
                                      std::set<int> suppress_seg = {});

/// Synthetic suites: moving shapes, identical distractors and a scripted
/// segmentation failure, each with `count` sequences seeded from `seed`.
std::vector<BenchmarkSuite> synthetic_suites(std::uint64_t seed, int count);

enum class AblationAxis { conditioning, fallback, tsc, all };
AblationAxis parse_axis(const std::string& name);  // throws ConfigError
std::string to_string(AblationAxis axis);

struct AblationRow {
    bool conditioning = true;
    bool fallback = true;
    double t_sc = 0.3;
    std::vector<eval::MetricReport> per_suite;
};

struct AblationTable {
    std::vector<std::string> suites;
    std::vector<std::vector<AblationRow>> blocks;  // separated by rules in the printed table
};

/// Row settings for an axis: conditioning off/on, fallback off/on at t_sc 0.3,
/// t_sc in {0.2, 0.3, 0.4} with fallback on; `all` concatenates the three blocks.
std::vector<std::vector<AblationRow>> ablation_plan(AblationAxis axis);

AblationTable run_ablation(const Network& net, const TrackerConfig& base, const std::vector<BenchmarkSuite>& suites,
                           AblationAxis axis);

/// Fixed-width text table: Cond. | Inst. Branch Fallback | t_sc | AUC P NP per suite, scores in percent.
std::string format_table(const AblationTable& table);

}  // namespace rts
