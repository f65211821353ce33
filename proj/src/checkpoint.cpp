#include "rts/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rts/config.hpp"
#include "rts/errors.hpp"

namespace rts {

namespace {

constexpr char kMagic[8] = {'R', 'T', 'S', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("truncated checkpoint " + path.string());
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net, const train::Hyperparams& hp) {
    json header;
    header["network"] = to_json(net.config());
    header["hyperparams"] = to_json(hp);
    json params = json::array();
    for (const auto& [name, var] : net.params().items()) params.push_back({{"name", name}, {"shape", var.shape()}});
    header["params"] = params;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kCheckpointFormatVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, var] : net.params().items())
        out.write(reinterpret_cast<const char*>(var.value().data()),
                  static_cast<std::streamsize>(var.value().size() * sizeof(double)));
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ConfigError(path.string() + " is not a checkpoint");
    LoadedCheckpoint ck;
    ck.format_version = static_cast<int>(read_pod<std::uint32_t>(in, path));
    if (ck.format_version != kCheckpointFormatVersion)
        throw ConfigError("unsupported checkpoint format version " + std::to_string(ck.format_version));
    const auto len = read_pod<std::uint64_t>(in, path);
    if (len > (1u << 26)) throw ConfigError("corrupt checkpoint header in " + path.string());
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("truncated checkpoint " + path.string());

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("corrupt checkpoint header: " + std::string(e.what()));
    }
    ck.hp = hyperparams_from_json(header.at("hyperparams"));
    ck.net = std::make_unique<Network>(net_config_from_json(header.at("network")));

    const auto& items = ck.net->params().items();
    const json& params = header.at("params");
    if (params.size() != items.size()) throw ConfigError("checkpoint parameter count does not match the network");
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string name = params[i].at("name").get<std::string>();
        const Shape shape = params[i].at("shape").get<Shape>();
        if (name != items[i].first || shape != items[i].second.shape())
            throw ConfigError("checkpoint parameter " + name + " does not match " + items[i].first);
        ag::Var v = items[i].second;
        Tensor& t = v.mutable_value();
        if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
            throw ConfigError("truncated checkpoint " + path.string());
    }
    return ck;
}

}  // namespace rts
