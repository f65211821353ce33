#pragma once

#include <functional>
#include <memory>

#include "rts/config.hpp"
#include "rts/synthetic.hpp"
#include "rts/train.hpp"

namespace rts {

/// The synthetic scene a training run samples from.
synth::SyntheticScene training_scene(const TrainOptions& opts);

/// Frame picks first_frame + k * frame_stride for k < sequence_frames.
std::vector<int> training_picks(const TrainOptions& opts);

/// Builds the 4-frame (by default) training sequence from the configured scene.
train::TrainSequence synthetic_train_sequence(const TrainOptions& opts, nn::Rng& rng);

struct TrainRun {
    std::unique_ptr<Network> net;
    train::LossReport first;
    train::LossReport last;
};

using StepLogger = std::function<void(int step, double lr, const train::LossReport& report)>;

/// Initializes a network from config.network (seeded with config.seed) and runs
/// config.train.steps Adam steps on one synthetic training sequence.
TrainRun run_training(const Config& config, const StepLogger& log = {});

}  // namespace rts
