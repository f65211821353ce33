#include "rts/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "rts/errors.hpp"

namespace rts {

void to_json(json& j, const Resolution& r) { j = json::array({r.h, r.w}); }
void from_json(const json& j, Resolution& r) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("resolution must be a [height, width] pair");
    r.h = j[0].get<int>();
    r.w = j[1].get<int>();
}

namespace {

struct Writer {
    json j = json::object();
    template <class T>
    void operator()(const char* key, const T& field) {
        j[key] = field;
    }
};

bool compatible(const json& want, const json& got) {
    if (want.is_boolean()) return got.is_boolean();
    if (want.is_number_integer()) return got.is_number_integer();
    if (want.is_number()) return got.is_number();
    if (want.is_array()) return got.is_array();
    if (want.is_string()) return got.is_string();
    return want.type() == got.type();
}

struct Reader {
    const json& j;
    std::string section;
    std::set<std::string> seen;

    Reader(const json& doc, std::string name) : j(doc), section(std::move(name)) {
        if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    }

    template <class T>
    void operator()(const char* key, T& field) {
        seen.insert(key);
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        json current = field;
        if (!compatible(current, v)) throw ConfigError("config key " + section + "." + key + " has the wrong type");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned())
                throw ConfigError("config key " + section + "." + key + " must be non-negative");
        }
        try {
            field = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key " + section + "." + key + ": " + e.what());
        }
    }

    void finish() const {
        for (const auto& [k, v] : j.items())
            if (!seen.count(k)) throw ConfigError("unknown config key " + section + "." + k);
    }
};

template <class V, class S>
void visit_network(V& v, S& c) {
    v("backbone_channels", c.backbone_channels);
    v("backbone_bias", c.backbone_bias);
    v("seg_feature_dim", c.seg_feature_dim);
    v("clf_feature_dim", c.clf_feature_dim);
    v("label_dim", c.label_dim);
    v("seg_filter_size", c.seg_filter_size);
    v("clf_filter_size", c.clf_filter_size);
    v("seg_input_stride", c.seg_input_stride);
    v("clf_input_stride", c.clf_input_stride);
    v("score_encoder_channels", c.score_encoder_channels);
    v("decoder_channels", c.decoder_channels);
    v("lambda_s_init", c.lambda_s_init);
    v("seed", c.seed);
}

template <class V, class S>
void visit_hyperparams(V& v, S& hp) {
    v("eta", hp.eta);
    v("lambda_c", hp.lambda_c);
    v("fg_threshold", hp.fg_threshold);
    v("clf_iter", hp.clf_iter);
    v("seg_init_iter", hp.seg_init_iter);
    v("seg_update_iter", hp.seg_update_iter);
    v("lr", hp.schedule.base_lr);
    v("lr_gamma", hp.schedule.gamma);
    v("lr_milestones", hp.schedule.milestones);
    v("beta1", hp.beta1);
    v("beta2", hp.beta2);
    v("adam_eps", hp.adam_eps);
}

template <class V, class S>
void visit_train(V& v, S& t) {
    visit_hyperparams(v, t.hp);
    v("area_factor", t.crop.area_factor);
    v("crop", t.crop.resolution);
    v("center_jitter", t.crop.center_jitter);
    v("scale_jitter", t.crop.scale_jitter);
    v("steps", t.steps);
    v("sequence_frames", t.sequence_frames);
    v("first_frame", t.first_frame);
    v("frame_stride", t.frame_stride);
    v("resample_crops", t.resample_crops);
    v("scene_seed", t.scene_seed);
    v("distractor", t.distractor);
    v("log_every", t.log_every);
}

template <class V, class S>
void visit_tracker(V& v, S& c) {
    v("t_sc", c.t_sc);
    v("t_ss", c.t_ss);
    v("seg_capacity", c.seg_capacity);
    v("clf_capacity", c.clf_capacity);
    v("seg_learning_rate", c.seg_learning_rate);
    v("clf_learning_rate", c.clf_learning_rate);
    v("init_phase", c.init_phase);
    v("refit_interval", c.refit_interval);
    v("area_factor", c.area_factor);
    v("crop", c.crop);
    v("seg_init_iter", c.seg_init_iter);
    v("seg_refit_iter", c.seg_refit_iter);
    v("clf_init_iter", c.clf_init_iter);
    v("clf_refit_iter", c.clf_refit_iter);
    v("lambda_c", c.lambda_c);
    v("fg_threshold", c.fg_threshold);
    v("sigma_min", c.sigma_min);
    v("sigma_max", c.sigma_max);
    v("scale_history", c.scale_history);
    v("max_scale_change", c.max_scale_change);
    v("lost_area_growth", c.lost_area_growth);
    v("max_search_growth", c.max_search_growth);
    v("size_from_std", c.size_from_std);
    v("min_size", c.min_size);
    v("min_mass", c.min_mass);
    v("augmentations", c.augmentations);
    v("aug_translation", c.aug_translation);
    v("aug_blur_min", c.aug_blur_min);
    v("aug_blur_max", c.aug_blur_max);
    v("conditioning", c.conditioning);
    v("fallback", c.fallback);
}

template <class S, class Visit>
json write(const S& s, Visit visit) {
    Writer w;
    visit(w, s);
    return w.j;
}

template <class S, class Visit>
S read(const json& j, const std::string& section, Visit visit, S s = {}) {
    Reader r(j, section);
    visit(r, s);
    r.finish();
    return s;
}

}  // namespace

void TrainOptions::validate() const {
    hp.validate();
    if (!(crop.area_factor > 0.0)) throw ConfigError("train.area_factor must be positive");
    if (crop.resolution.h <= 0 || crop.resolution.w <= 0 || crop.resolution.h % kMaxFeatureStride ||
        crop.resolution.w % kMaxFeatureStride)
        throw ConfigError("train.crop must be a positive multiple of 32");
    if (!(crop.center_jitter >= 0.0) || !(crop.scale_jitter >= 0.0 && crop.scale_jitter < 1.0))
        throw ConfigError("train jitter must be non-negative (scale jitter below 1)");
    if (steps < 0) throw ConfigError("train.steps must be non-negative");
    if (sequence_frames < 2) throw ConfigError("train.sequence_frames must be at least 2");
    if (first_frame < 0) throw ConfigError("train.first_frame must be non-negative");
    if (frame_stride < 1) throw ConfigError("train.frame_stride must be positive");
    if (log_every < 1) throw ConfigError("train.log_every must be positive");
}

void Config::validate() const {
    if (schema_version != kConfigSchemaVersion)
        throw ConfigError("unsupported config schema version " + std::to_string(schema_version));
    network.validate();
    train.validate();
    tracker.validate();
}

json to_json(const NetConfig& c) {
    return write(c, [](auto& v, auto& s) { visit_network(v, s); });
}
json to_json(const train::Hyperparams& hp) {
    return write(hp, [](auto& v, auto& s) { visit_hyperparams(v, s); });
}
json to_json(const TrackerConfig& c) {
    return write(c, [](auto& v, auto& s) { visit_tracker(v, s); });
}

json to_json(const Config& c) {
    json j = json::object();
    j["schema_version"] = c.schema_version;
    j["seed"] = c.seed;
    j["network"] = to_json(c.network);
    j["train"] = write(c.train, [](auto& v, auto& s) { visit_train(v, s); });
    j["tracker"] = to_json(c.tracker);
    return j;
}

NetConfig net_config_from_json(const json& j) {
    return read<NetConfig>(j, "network", [](auto& v, auto& s) { visit_network(v, s); });
}

train::Hyperparams hyperparams_from_json(const json& j) {
    return read<train::Hyperparams>(j, "hyperparams", [](auto& v, auto& s) { visit_hyperparams(v, s); });
}

Config config_from_json(const json& j) {
    Config c;
    Reader top(j, "config");
    top("schema_version", c.schema_version);
    top("seed", c.seed);
    json empty = json::object();
    std::set<std::string> sections{"network", "train", "tracker"};
    for (const auto& [k, v] : j.items())
        if (!sections.count(k) && k != "schema_version" && k != "seed") throw ConfigError("unknown config key " + k);
    c.network = read<NetConfig>(j.value("network", empty), "network", [](auto& v, auto& s) { visit_network(v, s); });
    c.train = read<TrainOptions>(j.value("train", empty), "train", [](auto& v, auto& s) { visit_train(v, s); });
    c.tracker = read<TrackerConfig>(j.value("tracker", empty), "tracker", [](auto& v, auto& s) { visit_tracker(v, s); });
    return c;
}

namespace {

std::string upper(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

json parse_env_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    return v.is_discarded() ? json(raw) : v;
}

}  // namespace

void apply_env_overrides(json& doc, const EnvLookup& lookup) {
    const json defaults = to_json(Config{});
    for (const auto& [key, value] : defaults.items()) {
        if (value.is_object()) {
            for (const auto& [sub, unused] : value.items()) {
                (void)unused;
                if (auto raw = lookup("RTS_" + upper(key) + "__" + upper(sub))) doc[key][sub] = parse_env_value(*raw);
            }
        } else if (auto raw = lookup("RTS_" + upper(key))) {
            doc[key] = parse_env_value(*raw);
        }
    }
}

EnvLookup process_environment() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        return v ? std::optional<std::string>(v) : std::nullopt;
    };
}

Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot read config file " + path->string());
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + path->string() + " is not valid JSON: " + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    }
    if (env) apply_env_overrides(doc, env);
    Config c = config_from_json(doc);
    c.validate();
    return c;
}

std::string config_hash(const Config& c) {
    const std::string text = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

}  // namespace rts
