#include "rts/pipeline.hpp"

#include "rts/errors.hpp"

namespace rts {

synth::SyntheticScene training_scene(const TrainOptions& opts) {
    const int needed = opts.first_frame + (opts.sequence_frames - 1) * opts.frame_stride + 1;
    const int length = std::max(60, needed);
    return opts.distractor ? synth::distractor_scene(opts.scene_seed, length)
                           : synth::moving_shape_scene(opts.scene_seed, length);
}

std::vector<int> training_picks(const TrainOptions& opts) {
    std::vector<int> picks;
    for (int k = 0; k < opts.sequence_frames; ++k) picks.push_back(opts.first_frame + k * opts.frame_stride);
    return picks;
}

namespace {

struct SceneData {
    synth::SyntheticSequence seq;
    std::vector<BBox> boxes;
};

SceneData scene_data(const TrainOptions& opts) {
    SceneData d{synth::gen_synthetic_sequence(training_scene(opts), opts.scene_seed), {}};
    for (const auto& b : d.seq.boxes) d.boxes.push_back(b.value_or(BBox{}));
    return d;
}

}  // namespace

train::TrainSequence synthetic_train_sequence(const TrainOptions& opts, nn::Rng& rng) {
    const SceneData d = scene_data(opts);
    return train::make_train_sequence(d.seq.frames, d.seq.masks, d.boxes, training_picks(opts), opts.crop, rng);
}

TrainRun run_training(const Config& config, const StepLogger& log) {
    config.validate();
    NetConfig nc = config.network;
    nc.seed = config.seed;
    TrainRun run{std::make_unique<Network>(nc), {}, {}};

    const TrainOptions& opts = config.train;
    const SceneData d = scene_data(opts);
    const auto picks = training_picks(opts);
    nn::Rng rng(config.seed ^ 0x5851F42D4C957F2DULL);
    auto seq = train::make_train_sequence(d.seq.frames, d.seq.masks, d.boxes, picks, opts.crop, rng);

    train::Adam adam(run.net->params(), opts.hp);
    for (int step = 0; step < opts.steps; ++step) {
        if (opts.resample_crops && step > 0)
            seq = train::make_train_sequence(d.seq.frames, d.seq.masks, d.boxes, picks, opts.crop, rng);
        const double lr = opts.hp.schedule.at(adam.steps());
        const auto report = train::train_step(*run.net, {seq}, adam, opts.hp);
        if (step == 0) run.first = report;
        run.last = report;
        if (log) log(step, lr, report);
    }
    return run;
}

}  // namespace rts
