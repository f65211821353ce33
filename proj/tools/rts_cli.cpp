#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rts/ablation.hpp"
#include "rts/checkpoint.hpp"
#include "rts/config.hpp"
#include "rts/errors.hpp"
#include "rts/evalkit.hpp"
#include "rts/pipeline.hpp"
#include "rts/sequence_io.hpp"
#include "rts/synthetic.hpp"
#include "rts/tracker.hpp"

namespace fs = std::filesystem;
using namespace rts;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitMissing = 2;
constexpr int kExitFailure = 1;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

Config resolve_config(const Common& c) {
    std::optional<fs::path> path;
    if (!c.config_path.empty()) {
        if (!fs::exists(c.config_path)) throw MissingInput("config file " + c.config_path + " does not exist");
        path = c.config_path;
    }
    Config cfg = load_config(path);
    if (c.seed) cfg.seed = *c.seed;
    cfg.tracker.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json box_json(const OptBox& b) {
    if (!b) return nullptr;
    return json::array({b->x, b->y, b->w, b->h});
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string scene = "moving";
    int length = 0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    synth::SyntheticScene scene;
    if (a.scene == "moving") scene = synth::moving_shape_scene(a.seed, a.length > 0 ? a.length : 60);
    else if (a.scene == "distractor") scene = synth::distractor_scene(a.seed, a.length > 0 ? a.length : 60);
    else scene = synth::fallback_scene(a.seed, a.length > 0 ? a.length : 40);
    const auto seq = synth::gen_synthetic_sequence(scene, a.seed);
    const std::set<int> suppress = a.scene == "fallback" ? scripted_seg_failure(scene.length) : std::set<int>{};
    io::save_sequence(a.out, seq.frames, seq.masks, seq.boxes, suppress);
    std::printf("wrote %zu frames to %s\n", seq.frames.size(), a.out.c_str());
    return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c) {
    const Config cfg = resolve_config(c);
    const fs::path out = c.out;
    fs::create_directories(out);
    std::ofstream log(out / "train_log.csv");
    log << "step,lr,total,seg,clf,mean_iou\n";
    const auto t0 = std::chrono::steady_clock::now();
    auto run = run_training(cfg, [&](int step, double lr, const train::LossReport& r) {
        char line[160];
        std::snprintf(line, sizeof line, "%d,%.6g,%.8g,%.8g,%.8g,%.6f", step, lr, r.total, r.seg_loss, r.clf_loss,
                      r.mean_iou());
        log << line << '\n';
        if (step % cfg.train.log_every == 0 || step + 1 == cfg.train.steps)
            std::printf("step %4d  lr %.2e  loss %.5f  (seg %.5f, clf %.5f)  iou %.3f\n", step, lr, r.total, r.seg_loss,
                        r.clf_loss, r.mean_iou());
        std::fflush(stdout);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(out / "model.rtsc", *run.net, cfg.train.hp);
    write_json(out / "manifest.json", {{"command", "train"},
                                       {"config_hash", config_hash(cfg)},
                                       {"seed", cfg.seed},
                                       {"config", to_json(cfg)},
                                       {"initial_loss", run.first.total},
                                       {"final_loss", run.last.total},
                                       {"final_mean_iou", run.last.mean_iou()},
                                       {"seconds", secs}});
    std::printf("saved %s\n", (out / "model.rtsc").c_str());
    return 0;
}

// ---------------------------------------------------------------- track

struct TrackArgs {
    std::string checkpoint;
    std::string sequence;
    bool no_conditioning = false;
    bool no_fallback = false;
    std::optional<double> tsc;
    std::string masks = "on";
};

void apply_tracker_flags(Config& cfg, const TrackArgs& a) {
    if (a.no_conditioning) cfg.tracker.conditioning = false;
    if (a.no_fallback) cfg.tracker.fallback = false;
    if (a.tsc) cfg.tracker.t_sc = *a.tsc;
    cfg.validate();
}

LoadedCheckpoint require_checkpoint(const std::string& path) {
    if (path.empty()) throw MissingInput("--checkpoint is required");
    if (!fs::exists(path)) throw MissingInput("checkpoint " + path + " does not exist");
    return load_checkpoint(path);
}

int cmd_track(const Common& c, const TrackArgs& a) {
    Config cfg = resolve_config(c);
    apply_tracker_flags(cfg, a);
    const auto ck = require_checkpoint(a.checkpoint);
    const auto seq = io::load_sequence(a.sequence);

    const Tracker tracker(*ck.net, cfg.tracker);
    TrackerHooks hooks;
    if (!seq.suppress_seg.empty())
        hooks.suppress_segmentation = [&seq](int f) { return seq.suppress_seg.count(f) > 0; };
    const auto outputs = run_sequence(tracker, seq.frames, seq.init, hooks);

    const fs::path out = c.out;
    fs::create_directories(out);
    std::vector<OptBox> boxes;
    json frames = json::array();
    for (const auto& o : outputs) {
        boxes.push_back(o.box);
        frames.push_back({{"frame", o.frame_index},
                          {"confidence", o.confidence},
                          {"case", to_string(o.decision.kase)},
                          {"update_seg", o.decision.update_seg},
                          {"update_clf", o.decision.update_clf},
                          {"source", o.source == StateSource::mask            ? "mask"
                                     : o.source == StateSource::instance_peak ? "instance_peak"
                                                                              : "kept"},
                          {"seg_refit", o.seg_refit},
                          {"clf_refit", o.clf_refit},
                          {"box", box_json(o.box)}});
    }
    io::write_boxes(out / "boxes.txt", boxes);
    if (a.masks == "on") {
        fs::create_directories(out / "masks");
        for (std::size_t i = 0; i < outputs.size(); ++i)
            io::write_mask(out / "masks" / (seq.stems[i] + ".png"), outputs[i].mask, cfg.tracker.t_ss);
    }
    write_json(out / "manifest.json", {{"command", "track"},
                                       {"config_hash", config_hash(cfg)},
                                       {"seed", cfg.seed},
                                       {"checkpoint", a.checkpoint},
                                       {"sequence", seq.name},
                                       {"config", to_json(cfg)},
                                       {"frames", frames}});
    std::size_t located = 0;
    for (std::size_t i = 1; i < boxes.size(); ++i) located += boxes[i].has_value();
    std::printf("tracked %zu frames (%zu with a box) -> %s\n", outputs.size(), located, (out / "boxes.txt").c_str());
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string results;
    std::string groundtruth;
};

// A results directory holds boxes.txt directly, or one subdirectory per sequence.
std::vector<std::pair<std::string, fs::path>> result_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw MissingInput("results directory " + root.string() + " does not exist");
    if (fs::exists(root / "boxes.txt")) return {{"", root}};
    std::vector<std::pair<std::string, fs::path>> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "boxes.txt")) dirs.emplace_back(e.path().filename().string(), e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw MissingInput("no boxes.txt found under " + root.string());
    return dirs;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
    const auto dirs = result_dirs(a.results);
    std::vector<eval::MetricReport> reports;
    for (const auto& [name, dir] : dirs) {
        const fs::path gt_dir = name.empty() ? fs::path(a.groundtruth) : fs::path(a.groundtruth) / name;
        if (!fs::exists(gt_dir / "groundtruth.txt")) throw MissingInput("missing " + (gt_dir / "groundtruth.txt").string());
        eval::SequenceResult r;
        r.pred_boxes = io::read_boxes(dir / "boxes.txt");
        r.gt_boxes = io::read_boxes(gt_dir / "groundtruth.txt");
        if (fs::is_directory(dir / "masks") && fs::is_directory(gt_dir / "masks")) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(gt_dir / "masks")) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                r.gt_masks.push_back(io::read_mask(f));
                r.pred_masks.push_back(io::read_mask(dir / "masks" / f.filename()));
            }
        }
        reports.push_back(eval::evaluate(r));
        std::printf("%-24s AUC %.4f  P %.4f  NP %.4f\n", name.empty() ? "sequence" : name.c_str(), reports.back().auc,
                    reports.back().precision, reports.back().norm_precision);
    }
    const auto total = eval::aggregate(reports);
    const fs::path out = c.out.empty() ? fs::path(a.results) : fs::path(c.out);
    eval::write_report(total, out);
    std::printf("overall: AUC %.4f  P %.4f  NP %.4f", total.auc, total.precision, total.norm_precision);
    if (total.mean_j) std::printf("  J %.4f", *total.mean_j);
    std::printf("  (%zu sequences) -> %s\n", reports.size(), (out / "metrics.txt").c_str());
    return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    std::string checkpoint;
    std::string axis = "all";
    std::vector<std::string> sequences;
    int count = 3;
};

int cmd_ablate(const Common& c, const AblateArgs& a, const TrackArgs& flags) {
    Config cfg = resolve_config(c);
    apply_tracker_flags(cfg, flags);
    const AblationAxis axis = parse_axis(a.axis);
    const auto ck = require_checkpoint(a.checkpoint);

    std::vector<BenchmarkSuite> suites;
    if (a.sequences.empty()) {
        suites = synthetic_suites(cfg.seed, a.count);
    } else {
        BenchmarkSuite suite{"sequences", {}};
        for (const auto& dir : a.sequences) {
            auto s = io::load_sequence(dir);
            if (s.groundtruth.empty()) throw MissingInput("sequence " + dir + " has no groundtruth.txt");
            suite.sequences.push_back({s.name, std::move(s.frames), s.init, s.groundtruth, s.gt_masks, s.suppress_seg});
        }
        suites.push_back(std::move(suite));
    }
    const auto table = run_ablation(*ck.net, cfg.tracker, suites, axis);
    const std::string text = format_table(table);
    std::fputs(text.c_str(), stdout);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        std::ofstream(fs::path(c.out) / "ablation.txt") << text;
        write_json(fs::path(c.out) / "manifest.json",
                   {{"command", "ablate"}, {"axis", to_string(axis)}, {"config_hash", config_hash(cfg)}, {"seed", cfg.seed}});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segmentation-centric visual object tracker"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON config file");
    app.add_option("--seed", common.seed, "Seed overriding the config");
    app.add_option("--out", common.out, "Output directory");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence directory");
    synth->add_option("--scene", synth_args.scene)->check(CLI::IsMember({"moving", "distractor", "fallback"}));
    synth->add_option("--length", synth_args.length, "Number of frames");
    synth->add_option("--seed", synth_args.seed);
    synth->add_option("--out", synth_args.out)->required();

    auto* train = app.add_subcommand("train", "Train a model on a synthetic sequence");
    train->add_option("--config", common.config_path);
    train->add_option("--seed", common.seed);
    train->add_option("--out", common.out)->required();

    TrackArgs track_args;
    auto add_tracker_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path);
        cmd->add_option("--seed", common.seed);
        cmd->add_option("--out", common.out);
        cmd->add_option("--checkpoint", track_args.checkpoint);
        cmd->add_flag("--no-conditioning", track_args.no_conditioning);
        cmd->add_flag("--no-fallback", track_args.no_fallback);
        cmd->add_option("--tsc", track_args.tsc)->check(CLI::Range(0.0, 1.0));
    };
    auto* track = app.add_subcommand("track", "Track one sequence directory");
    add_tracker_flags(track);
    track->add_option("--masks", track_args.masks)->check(CLI::IsMember({"on", "off"}));
    track->add_option("sequence", track_args.sequence, "Sequence directory")->required();
    track->get_option("--out")->required();

    EvalArgs eval_args;
    auto* evalc = app.add_subcommand("eval", "Score box/mask results against ground truth");
    evalc->add_option("--out", common.out);
    evalc->add_option("results", eval_args.results)->required();
    evalc->add_option("groundtruth", eval_args.groundtruth)->required();

    AblateArgs ablate_args;
    auto* ablate = app.add_subcommand("ablate", "Inference-strategy ablation table");
    add_tracker_flags(ablate);
    ablate->add_option("--axis", ablate_args.axis)->check(CLI::IsMember({"conditioning", "fallback", "tsc", "all"}));
    ablate->add_option("--count", ablate_args.count, "Synthetic sequences per suite")->check(CLI::PositiveNumber);
    ablate->add_option("--sequences", ablate_args.sequences, "Sequence directories instead of synthetic suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(synth_args);
        if (*train) return cmd_train(common);
        if (*track) return cmd_track(common, track_args);
        if (*evalc) return cmd_eval(common, eval_args);
        if (*ablate) return cmd_ablate(common, ablate_args, track_args);
    } catch (const MissingInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMissing;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}
