#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "rts/model.hpp"
#include "rts/tracker.hpp"
#include "rts/train.hpp"

namespace rts {

inline constexpr int kConfigSchemaVersion = 1;

/// Offline training run: which synthetic scene to sample, how long to train.
struct TrainOptions {
    train::Hyperparams hp;
    train::CropSpec crop{6.0, {480, 832}, 0.25, 0.1};
    int steps = 500;
    int sequence_frames = 4;
    int first_frame = 0;
    int frame_stride = 5;
    bool resample_crops = false;  // redraw the test-frame jitter every step
    std::uint64_t scene_seed = 7;
    bool distractor = true;
    int log_every = 25;

    void validate() const;
};

struct Config {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 1;
    NetConfig network;
    TrainOptions train;
    TrackerConfig tracker;

    void validate() const;
};

using json = nlohmann::json;

json to_json(const NetConfig& c);
json to_json(const train::Hyperparams& hp);
json to_json(const TrackerConfig& c);
json to_json(const Config& c);

// Strict readers: unknown keys and wrong types throw ConfigError. Missing keys keep defaults.
NetConfig net_config_from_json(const json& j);
train::Hyperparams hyperparams_from_json(const json& j);
Config config_from_json(const json& j);

/// Environment overrides: RTS_<SECTION>__<KEY>=value sets section.key (top-level
/// keys use RTS_<KEY>). Values are parsed as JSON, falling back to a string.
using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
void apply_env_overrides(json& doc, const EnvLookup& lookup);
EnvLookup process_environment();

/// Reads a config file (or defaults when `path` is empty), applies environment
/// overrides, validates.
Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_environment());

/// FNV-1a hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Config& c);

}  // namespace rts
