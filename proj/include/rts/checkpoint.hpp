#pragma once

#include <filesystem>
#include <memory>

#include "rts/model.hpp"
#include "rts/train.hpp"

namespace rts {

inline constexpr int kCheckpointFormatVersion = 1;

/// Binary archive: an 8-byte magic, a format version, a JSON header describing
/// the network config, hyperparameters and every named parameter array, then
/// the parameter values as little-endian doubles in header order.
void save_checkpoint(const std::filesystem::path& path, const Network& net, const train::Hyperparams& hp);

struct LoadedCheckpoint {
    std::unique_ptr<Network> net;
    train::Hyperparams hp;
    int format_version = 0;
};

/// Throws ConfigError for a missing, truncated or incompatible file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rts
