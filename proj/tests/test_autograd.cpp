#include <doctest.h>

#include "rts/autograd.hpp"
#include "rts/errors.hpp"
#include "support.hpp"

using namespace rts;
using kernels::ConvGeometry;

namespace {

// Checks d/dx sum(op(x) * R) against central differences for every input.
void check_op(const std::function<ag::Var(const std::vector<ag::Var>&)>& op, std::vector<Tensor> inputs,
              std::uint64_t seed, double tol = 1e-6) {
    std::mt19937_64 rng(seed);
    std::vector<ag::Var> vars;
    for (auto& t : inputs) vars.push_back(ag::Var::parameter(t));
    const ag::Var out = op(vars);
    const Tensor probe = oracle::random_tensor(out.shape(), rng);
    ag::backward(ag::dot(out, ag::Var::constant(probe)));

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor dir = oracle::random_normal(inputs[k].shape(), rng);
        auto f = [&](const Tensor& xk) {
            std::vector<ag::Var> vs;
            for (std::size_t j = 0; j < inputs.size(); ++j) vs.push_back(ag::Var::constant(j == k ? xk : inputs[j]));
            return oracle::dot(op(vs).value(), probe);
        };
        const double fd = oracle::central_difference(f, inputs[k], dir, 1e-6);
        const double an = oracle::dot(vars[k].grad(), dir);
        CHECK(oracle::rel_err(an, fd, 1e-8) < tol);
    }
}

}  // namespace

TEST_CASE("conv2d matches the definition for odd, even and strided kernels") {
    std::mt19937_64 rng(1);
    for (const ConvGeometry g : {ConvGeometry::same(3), ConvGeometry::same(4), ConvGeometry::same(1),
                                 ConvGeometry::strided(3, 2)}) {
        const Tensor x = oracle::random_tensor({2, 3, 7, 6}, rng);
        const Tensor w = oracle::random_tensor({4, 3, g.kernel, g.kernel}, rng);
        CHECK(max_abs_diff(kernels::conv2d(x, w, g), oracle::conv(x, w, g)) < 1e-12);
    }
}

TEST_CASE("same padding keeps the spatial size, including the asymmetric 4x4 case") {
    const ConvGeometry g4 = ConvGeometry::same(4);
    CHECK(g4.pad_begin == 1);
    CHECK(g4.pad_end == 2);
    CHECK(g4.out_size(15) == 15);
    CHECK(ConvGeometry::same(3).out_size(26) == 26);
}

TEST_CASE("conv backward passes are adjoints of the forward map") {
    std::mt19937_64 rng(2);
    const ConvGeometry g = ConvGeometry::same(4);
    const Tensor x = oracle::random_tensor({2, 3, 5, 6}, rng);
    const Tensor w = oracle::random_tensor({2, 3, 4, 4}, rng);
    const Tensor gy = oracle::random_tensor({2, 2, 5, 6}, rng);
    const double lhs = oracle::dot(kernels::conv2d(x, w, g), gy);
    CHECK(oracle::rel_err(lhs, oracle::dot(x, kernels::conv2d_backward_input(gy, w, g, 5, 6))) < 1e-12);
    CHECK(oracle::rel_err(lhs, oracle::dot(w, kernels::conv2d_backward_weight(x, gy, g))) < 1e-12);
}

TEST_CASE("bilinear upsampling follows the half-pixel convention") {
    // [[0,1],[0,1]] -> 4 columns: sources -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
    const Tensor x({1, 1, 2, 2}, {0.0, 1.0, 0.0, 1.0});
    const Tensor y = kernels::resize_bilinear(x, 4, 4);
    const double expected[4] = {0.0, 0.25, 0.75, 1.0};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(y.at(0, 0, r, c) == doctest::Approx(expected[c]).epsilon(1e-15));

    // Constants are preserved, for any size pair.
    const Tensor k({1, 2, 3, 5}, 0.7);
    const Tensor resized = kernels::resize_bilinear(k, 6, 10);
    for (double v : resized.values()) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("max pool 3x3 keeps the size and picks neighbourhood maxima") {
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor y = kernels::max_pool3(x, nullptr);
    const double expected[9] = {5, 6, 6, 8, 9, 9, 8, 9, 9};
    for (int i = 0; i < 9; ++i) CHECK(y[i] == expected[i]);
}

TEST_CASE("autograd ops match central differences") {
    std::mt19937_64 rng(3);
    const Tensor a = oracle::random_tensor({2, 3, 4, 5}, rng);
    const Tensor b = oracle::random_tensor({2, 3, 4, 5}, rng, 0.5, 2.0);
    check_op([](auto& v) { return ag::mul(v[0], v[1]); }, {a, b}, 10);
    check_op([](auto& v) { return ag::div(v[0], v[1]); }, {a, b}, 11);
    check_op([](auto& v) { return ag::sigmoid(v[0]); }, {a}, 12);
    check_op([](auto& v) { return ag::softplus(v[0]); }, {a}, 13);
    check_op([](auto& v) { return ag::square(v[0]); }, {a}, 14);
    check_op([](auto& v) { return ag::sum_squares(v[0]); }, {a}, 15);
    check_op([](auto& v) { return ag::resize_bilinear(v[0], 7, 9); }, {a}, 16);
    check_op([](auto& v) { return ag::avg_pool(v[0], 2); }, {oracle::random_tensor({1, 2, 4, 6}, rng)}, 17);
    check_op([](auto& v) { return ag::concat_channels(v[0], v[1]); }, {a, b}, 18);
    check_op([](auto& v) { return ag::concat_batch({v[0], v[1]}); }, {a, b}, 19);
    check_op([](auto& v) { return ag::slice_batch(v[0], 1); }, {a}, 20);
    const Tensor w = oracle::random_tensor({2, 3, 3, 3}, rng);
    check_op([](auto& v) { return ag::conv2d(v[0], v[1], ConvGeometry::same(3)); }, {a, w}, 21);
    const Tensor go = oracle::random_tensor({2, 2, 4, 5}, rng);
    check_op([](auto& v) { return ag::conv2d_weight_grad(v[0], v[1], ConvGeometry::same(3)); }, {a, go}, 22);
    check_op([](auto& v) { return ag::mul_channel_broadcast(v[0], v[1]); }, {a, oracle::random_tensor({2, 1, 4, 5}, rng)},
             23);
    check_op([](auto& v) { return ag::add_channel_bias(v[0], v[1]); }, {a, oracle::random_tensor({3}, rng)}, 24);
    check_op([](auto& v) { return ag::scale(v[0], v[1]); }, {a, Tensor::scalar(0.3)}, 25);
}

TEST_CASE("piecewise-linear ops agree with finite differences away from kinks") {
    std::mt19937_64 rng(4);
    Tensor a = oracle::random_tensor({1, 2, 5, 5}, rng);
    for (double& v : a.values())
        if (std::abs(v) < 0.05) v += 0.1;  // keep relu away from 0
    check_op([](auto& v) { return ag::relu(v[0]); }, {a}, 30);
    // Distinct values keep the max-pool argmax stable under small perturbations.
    Tensor d({1, 1, 4, 4});
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.37 * static_cast<double>((i * 7) % 16);
    check_op([](auto& v) { return ag::max_pool3(v[0]); }, {d}, 31);
}

TEST_CASE("gradients accumulate over shared inputs and reach only leaves") {
    ag::Var x = ag::Var::parameter(Tensor({2}, {1.0, 2.0}));
    const ag::Var y = ag::add(ag::mul(x, x), x);  // x^2 + x
    ag::backward(ag::sum(y));
    CHECK(x.grad()[0] == doctest::Approx(3.0));
    CHECK(x.grad()[1] == doctest::Approx(5.0));
}

TEST_CASE("NoGradGuard records no graph") {
    ag::Var x = ag::Var::parameter(Tensor({2}, 1.0));
    ag::NoGradGuard guard;
    const ag::Var y = ag::mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("BranchTrace signature depends on relu sign patterns only") {
    auto signature = [](const Tensor& t) {
        ag::BranchTrace trace;
        ag::relu(ag::Var::constant(t));
        return trace.signature();
    };
    const Tensor a({3}, {1.0, -1.0, 2.0});
    const Tensor b({3}, {0.5, -3.0, 7.0});
    const Tensor c({3}, {-0.5, -3.0, 7.0});
    CHECK(signature(a) == signature(b));
    CHECK(signature(a) != signature(c));
}

TEST_CASE("shape mismatches are rejected") {
    const ag::Var a = ag::Var::constant(Tensor({2, 3}));
    const ag::Var b = ag::Var::constant(Tensor({3, 2}));
    CHECK_THROWS_AS(ag::add(a, b), ConfigError);
}
