#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rts/autograd.hpp"

namespace rts::nn {

using Rng = std::mt19937_64;

/// Ordered registry of named trainable arrays. Layers hold handles to the same
/// graph nodes, so updating a value here is visible everywhere.
class ParamStore {
public:
    ag::Var add(const std::string& name, Tensor init);
    const ag::Var& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<std::pair<std::string, ag::Var>>& items() const { return params_; }
    std::vector<ag::Var> vars() const;
    std::size_t element_count() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, ag::Var>> params_;
};

struct Conv2d {
    ag::Var weight;
    ag::Var bias;  // undefined when the layer is bias-free
    kernels::ConvGeometry geometry;

    Conv2d() = default;
    /// He-normal initialization; `zero_init` starts the layer at exactly zero.
    Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels,
           kernels::ConvGeometry geometry, Rng& rng, bool with_bias = true, bool zero_init = false);

    ag::Var operator()(const ag::Var& x) const;
};

}  // namespace rts::nn
