#include "rts/nn.hpp"

#include <cmath>

#include "rts/errors.hpp"

namespace rts::nn {

ag::Var ParamStore::add(const std::string& name, Tensor init) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(name, ag::Var::parameter(std::move(init)));
    return params_.back().second;
}

const ag::Var& ParamStore::get(const std::string& name) const {
    for (const auto& [n, v] : params_)
        if (n == name) return v;
    throw ConfigError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, v] : params_)
        if (n == name) return true;
    return false;
}

std::vector<ag::Var> ParamStore::vars() const {
    std::vector<ag::Var> out;
    out.reserve(params_.size());
    for (const auto& [n, v] : params_) out.push_back(v);
    return out;
}

std::size_t ParamStore::element_count() const {
    std::size_t total = 0;
    for (const auto& [n, v] : params_) total += v.value().size();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [n, v] : params_) v.zero_grad();
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels,
               kernels::ConvGeometry geom, Rng& rng, bool with_bias, bool zero_init)
    : geometry(geom) {
    Tensor w({out_channels, in_channels, geom.kernel, geom.kernel});
    if (!zero_init) {
        const double fan_in = static_cast<double>(in_channels) * geom.kernel * geom.kernel;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (double& v : w.values()) v = dist(rng);
    }
    weight = store.add(name + ".weight", std::move(w));
    if (with_bias) bias = store.add(name + ".bias", Tensor({out_channels}));
}

ag::Var Conv2d::operator()(const ag::Var& x) const {
    ag::Var y = ag::conv2d(x, weight, geometry);
    return bias.defined() ? ag::add_channel_bias(y, bias) : y;
}

}  // namespace rts::nn
