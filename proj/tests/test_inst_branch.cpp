#include <doctest.h>

#include <cmath>

#include "rts/errors.hpp"
#include "rts/inst_branch.hpp"
#include "support.hpp"

using namespace rts;
using namespace rts::inst;

namespace {

ClfProblem random_problem(std::uint64_t seed, double fg_threshold, int n = 3, int c = 2, int hw = 5) {
    std::mt19937_64 rng(seed);
    ClfProblem p;
    p.features = ag::Var::constant(oracle::random_normal({n, c, hw, hw}, rng));
    p.labels = Tensor({n, 1, hw, hw});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const auto label = make_gaussian_label({hw * u(rng), hw * u(rng)}, 1.0, hw, hw);
        std::copy(label.map.data(), label.map.data() + label.map.size(), p.labels.data() + i * hw * hw);
        p.sample_weights.push_back(1.0 / n);
    }
    p.fg_threshold = fg_threshold;
    return p;
}

// Hinge residual straight from its definition.
std::vector<double> residual_oracle(const Tensor& scores, const Tensor& labels, double t) {
    std::vector<double> r(scores.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = labels[i] >= t ? scores[i] - labels[i] : std::max(0.0, scores[i]);
    return r;
}

double objective_oracle(const Tensor& kappa, const ClfProblem& p, double lambda) {
    const Tensor scores = oracle::conv(p.features.value(), kappa, kernels::ConvGeometry::same(kappa.dim(2)));
    const auto r = residual_oracle(scores, p.labels, p.fg_threshold);
    const std::size_t chunk = r.size() / p.sample_weights.size();
    double f = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) f += p.sample_weights[i / chunk] * r[i] * r[i];
    return f + 0.5 * lambda * squared_norm(kappa);
}

// Gauss-Newton model around `at`: hinge cells keep the active set they have at `at`.
double gn_model(const Tensor& kappa, const Tensor& at, const ClfProblem& p, double lambda) {
    const auto g = kernels::ConvGeometry::same(kappa.dim(2));
    const Tensor s0 = oracle::conv(p.features.value(), at, g);
    const Tensor s = oracle::conv(p.features.value(), kappa, g);
    const std::size_t chunk = s.size() / p.sample_weights.size();
    double f = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool fg = p.labels[i] >= p.fg_threshold;
        const double r = fg ? s[i] - p.labels[i] : (s0[i] > 0.0 ? s[i] : 0.0);
        f += p.sample_weights[i / chunk] * r * r;
    }
    return f + 0.5 * lambda * squared_norm(kappa);
}

}  // namespace

TEST_CASE("gaussian label values") {
    const auto label = make_gaussian_label({2.0, 3.0}, 1.0, 6, 8);
    CHECK(label.map.at(2, 3) == 1.0);
    CHECK(label.map.at(3, 4) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(label.map.at(2, 5) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
    const auto half = make_gaussian_label({0.5, 0.5}, 0.5, 2, 2);
    for (double v : half.map.values()) CHECK(v == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK_THROWS_AS(make_gaussian_label({0, 0}, 0.0, 2, 2), ConfigError);
}

TEST_CASE("label width follows the target size within bounds") {
    CHECK(label_sigma({64, 64}, 32) == doctest::Approx(0.5));
    CHECK(label_sigma({256, 256}, 32) == doctest::Approx(2.0));
    CHECK(label_sigma({4, 4}, 32) == 0.5);
    CHECK(label_sigma({4096, 4096}, 32) == 4.0);
}

TEST_CASE("cell and patch coordinates") {
    const Point c = patch_to_cell({15.5, 47.5}, 32);
    CHECK(c.row == doctest::Approx(0.0));
    CHECK(c.col == doctest::Approx(1.0));
    const Point back = cell_to_patch(c, 32);
    CHECK(back.row == doctest::Approx(15.5));
    CHECK(back.col == doctest::Approx(47.5));
}

TEST_CASE("hinge residual examples") {
    const Tensor labels({1, 1, 1, 4}, {0.5, 0.7, 0.0, 0.01});
    const ag::Var scores = ag::Var::constant(Tensor({1, 1, 1, 4}, {0.9, 0.0, -0.3, 0.3}));
    const Tensor r = hinge_residual(scores, labels, 0.05).value();
    CHECK(r[0] == doctest::Approx(0.4));
    CHECK(r[1] == doctest::Approx(-0.7));
    CHECK(r[2] == 0.0);
    CHECK(r[3] == doctest::Approx(0.3));
    CHECK_THROWS_AS(hinge_residual(scores, Tensor({1, 1, 1, 3}), 0.05), ConfigError);
}

TEST_CASE("objective matches the definition and its gradient") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ClfProblem p = random_problem(seed, 0.05);
        std::mt19937_64 rng(seed + 50);
        const Tensor kappa = oracle::random_normal({1, 2, 4, 4}, rng, 0.3);
        ag::Var k = ag::Var::parameter(kappa);
        const ag::Var f = inst_objective(k, p, 0.3);
        CHECK(f.item() == doctest::Approx(objective_oracle(kappa, p, 0.3)).epsilon(1e-12));
        ag::backward(f);
        const Tensor dir = oracle::random_normal(kappa.shape(), rng);
        const double fd = oracle::central_difference([&](const Tensor& t) { return objective_oracle(t, p, 0.3); },
                                                     kappa, dir, 1e-6);
        CHECK(oracle::rel_err(oracle::dot(k.grad(), dir), fd) < 1e-5);
    }
}

TEST_CASE("all-foreground instance converges to the ridge closed form") {
    // With every cell foreground the residual is linear and the normal equations are
    // (2 sum s_n A^T A + lambda I) kappa = 2 sum s_n A^T y.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ClfProblem p = random_problem(seed, 0.0);
        const double lambda = 0.5;
        const auto g = kernels::ConvGeometry::same(4);
        const int d = 2 * 16;
        Eigen::MatrixXd lhs = lambda * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
        for (int n = 0; n < p.samples(); ++n) {
            const Eigen::MatrixXd A = oracle::design_matrix(p.features.value(), n, g);
            const Eigen::Map<const Eigen::VectorXd> y(p.labels.data() + n * 25, 25);
            lhs += 2.0 * p.sample_weights[n] * A.transpose() * A;
            rhs += 2.0 * p.sample_weights[n] * A.transpose() * y;
        }
        const Eigen::VectorXd expected = lhs.ldlt().solve(rhs);
        const SolveResult r = solve_inst_model(p, ag::Var::constant(Tensor({1, 2, 4, 4})), 400, lambda);
        const Tensor& got = r.final().value();
        double num = 0.0;
        for (int i = 0; i < d; ++i) num += (got[i] - expected(i)) * (got[i] - expected(i));
        CHECK(std::sqrt(num) / expected.norm() < 1e-6);
    }
}

TEST_CASE("each step decreases its Gauss-Newton model") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ClfProblem p = random_problem(seed, 0.05);
        std::mt19937_64 rng(seed);
        const ag::Var k0 = ag::Var::constant(oracle::random_normal({1, 2, 4, 4}, rng, 0.3));
        const SolveResult r = solve_inst_model(p, k0, 6, 0.1);
        for (std::size_t i = 1; i < r.iterates.size(); ++i) {
            const Tensor& prev = r.iterates[i - 1].value();
            REQUIRE(gn_model(r.iterates[i].value(), prev, p, 0.1) <= objective_oracle(prev, p, 0.1) + 1e-12);
        }
    }
}

TEST_CASE("solver iterates are differentiable in the features") {
    const ClfProblem p = random_problem(3, 0.05, 2, 2, 4);
    ag::Var feats = ag::Var::parameter(p.features.value());
    ClfProblem q = p;
    q.features = feats;
    const SolveResult r = solve_inst_model(q, ag::Var::constant(Tensor({1, 2, 3, 3})), 3, 0.2);
    std::mt19937_64 rng(4);
    const Tensor probe = oracle::random_normal(r.final().shape(), rng);
    ag::backward(ag::dot(r.final(), ag::Var::constant(probe)));
    auto f = [&](const Tensor& x) {
        ClfProblem c = p;
        c.features = ag::Var::constant(x);
        return oracle::dot(solve_inst_model(c, ag::Var::constant(Tensor({1, 2, 3, 3})), 3, 0.2).final().value(), probe);
    };
    const Tensor dir = oracle::random_normal(feats.shape(), rng);
    CHECK(oracle::rel_err(oracle::dot(feats.grad(), dir), oracle::central_difference(f, feats.value(), dir, 1e-6)) < 1e-5);
}

TEST_CASE("zero iterations and empty memory") {
    const ClfProblem p = random_problem(1, 0.05);
    const ag::Var k0 = ag::Var::constant(Tensor({1, 2, 4, 4}, 0.25));
    CHECK(solve_inst_model(p, k0, 0, 0.1).final().value().storage() == k0.value().storage());
    CHECK_THROWS_AS(solve_inst_model(ClfProblem{}, k0, 2, 0.1), EmptyMemory);
    CHECK_THROWS_AS(make_clf_problem(ClfMemory(4), 0.05), EmptyMemory);
}

TEST_CASE("memory becomes a batched problem") {
    ClfMemory m(4, 0.1);
    std::mt19937_64 rng(5);
    for (int f = 0; f < 3; ++f)
        m.insert({ag::Var::constant(oracle::random_normal({1, 2, 3, 5}, rng)), make_gaussian_label({1, f}, 1.0, 3, 5)}, f);
    const ClfProblem p = make_clf_problem(m, 0.05);
    CHECK(p.features.shape() == Shape{3, 2, 3, 5});
    CHECK(p.labels.at(2, 0, 1, 2) == 1.0);
    CHECK(p.sample_weights == m.weights());
}

TEST_CASE("model application and peak selection") {
    std::mt19937_64 rng(6);
    const ClfFeatures x{ag::Var::constant(oracle::random_normal({1, 3, 4, 6}, rng))};
    const ClfModelParams kappa{ag::Var::constant(oracle::random_normal({1, 3, 4, 4}, rng))};
    const Tensor s = inst_model_apply(kappa, x).map.value();
    CHECK(s.shape() == Shape{1, 1, 4, 6});
    CHECK(max_abs_diff(s, oracle::conv(x.map.value(), kappa.filter.value(), kernels::ConvGeometry::same(4))) < 1e-12);
    CHECK_THROWS_AS(inst_model_apply(kappa, {ag::Var::constant(Tensor({1, 2, 4, 6}))}), ConfigError);

    Tensor map({3, 4}, 0.1);
    map.at(2, 1) = 0.9;
    map.at(1, 3) = 0.9;
    const Peak p = peak_confidence(map);
    CHECK(p.value == 0.9);
    CHECK(p.row == 1);
    CHECK(p.col == 3);
    const Peak flat = peak_confidence(Tensor({1, 1, 2, 2}, -1.0));
    CHECK((flat.row == 0 && flat.col == 0));
}
