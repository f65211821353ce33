#pragma once

// Independent oracles shared by the unit tests and the acceptance suite. They
// are deliberately written as plain loops and dense linear algebra, without
// calling the library code they are used to check.

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "rts/autograd.hpp"
#include "rts/kernels.hpp"
#include "rts/nn.hpp"
#include "rts/tensor.hpp"

namespace oracle {

using rts::Shape;
using rts::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (double& v : t.values()) v = u(rng);
    return t;
}

inline Tensor random_normal(const Shape& shape, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Tensor t(shape);
    for (double& v : t.values()) v = n(rng);
    return t;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_err(const Tensor& a, const Tensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// Zero-padded cross-correlation, literally from the definition.
inline Tensor conv(const Tensor& x, const Tensor& w, const rts::kernels::ConvGeometry& g) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), k = g.kernel;
    const int Ho = g.out_size(H), Wo = g.out_size(W);
    Tensor y({N, O, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int a = 0; a < k; ++a)
                            for (int b = 0; b < k; ++b) {
                                const int r = i * g.stride + a - g.pad_begin, q = j * g.stride + b - g.pad_begin;
                                if (r >= 0 && r < H && q >= 0 && q < W) acc += w.at(o, c, a, b) * x.at(n, c, r, q);
                            }
                    y.at(n, o, i, j) = acc;
                }
    return y;
}

/// Rows: output pixels of sample n (same-size conv); columns: filter taps (c, a, b).
inline Eigen::MatrixXd design_matrix(const Tensor& x, int n, const rts::kernels::ConvGeometry& g) {
    const int C = x.dim(1), H = x.dim(2), W = x.dim(3), k = g.kernel;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(H * W, C * k * k);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c)
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) {
                        const int r = i + a - g.pad_begin, q = j + b - g.pad_begin;
                        if (r >= 0 && r < H && q >= 0 && q < W) A(i * W + j, (c * k + a) * k + b) = x.at(n, c, r, q);
                    }
    return A;
}

/// argmin 1/2 sum_n s_n ||diag(w_n) (A_n t_e - y_ne)||^2 + lambda/2 ||t_e||^2, per output channel e.
/// x [N,C,H,W], targets [N,E,H,W], weights [N,1,H,W] -> filter [E,C,k,k].
inline Tensor weighted_ridge(const Tensor& x, const Tensor& targets, const Tensor& weights,
                             const std::vector<double>& s, double lambda, int k) {
    const auto g = rts::kernels::ConvGeometry::same(k);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), E = targets.dim(1);
    Tensor out({E, C, k, k});
    for (int e = 0; e < E; ++e) {
        Eigen::MatrixXd lhs = lambda * Eigen::MatrixXd::Identity(C * k * k, C * k * k);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(C * k * k);
        for (int n = 0; n < N; ++n) {
            const Eigen::MatrixXd A = design_matrix(x, n, g);
            Eigen::VectorXd d(H * W), y(H * W);
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    d(i * W + j) = weights.at(n, 0, i, j) * weights.at(n, 0, i, j);
                    y(i * W + j) = targets.at(n, e, i, j);
                }
            lhs += s[n] * A.transpose() * d.asDiagonal() * A;
            rhs += s[n] * A.transpose() * d.asDiagonal() * y;
        }
        const Eigen::VectorXd t = lhs.ldlt().solve(rhs);
        for (int i = 0; i < C * k * k; ++i) out[static_cast<std::size_t>(e) * C * k * k + i] = t(i);
    }
    return out;
}

/// Central-difference directional derivative of f along d at p.
inline double central_difference(const std::function<double(const Tensor&)>& f, const Tensor& p, const Tensor& d,
                                 double eps) {
    Tensor plus = p, minus = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        plus[i] += eps * d[i];
        minus[i] -= eps * d[i];
    }
    return (f(plus) - f(minus)) / (2.0 * eps);
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Random unit-norm direction in the space of all parameters of a store.
inline std::vector<Tensor> random_direction(const rts::nn::ParamStore& params, std::mt19937_64& rng) {
    std::vector<Tensor> dir;
    double norm = 0.0;
    for (const auto& [name, v] : params.items()) {
        dir.push_back(random_normal(v.shape(), rng));
        for (double x : dir.back().values()) norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& t : dir)
        for (double& x : t.values()) x /= norm;
    return dir;
}

/// Shifts every parameter by eps * dir in place.
inline void displace(rts::nn::ParamStore& params, const std::vector<Tensor>& dir, double eps) {
    std::size_t k = 0;
    for (const auto& item : params.items()) {
        rts::ag::Var v = item.second;
        Tensor& t = v.mutable_value();
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += eps * dir[k][i];
        ++k;
    }
}

/// Lovasz hinge from its definition: hinge errors sorted descending, weighted by
/// the increments of the Jaccard loss along the sorted prefix.
inline double lovasz_hinge(const std::vector<double>& logits, const std::vector<int>& gt) {
    const std::size_t n = logits.size();
    std::vector<double> err(n);
    for (std::size_t i = 0; i < n; ++i) err[i] = 1.0 - logits[i] * (2.0 * gt[i] - 1.0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    int positives = 0;
    for (int g : gt) positives += g;
    auto jaccard_loss = [&](std::size_t prefix) {
        // Loss of predicting the first `prefix` sorted pixels as wrong.
        int fn = 0, fp = 0;
        for (std::size_t i = 0; i < prefix; ++i) (gt[order[i]] ? fn : fp)++;
        const double inter = positives - fn;
        const double uni = positives + fp;
        return uni > 0 ? 1.0 - inter / uni : 0.0;
    };
    double loss = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double cur = jaccard_loss(i + 1);
        loss += std::max(0.0, err[order[i]]) * (cur - prev);
        prev = cur;
    }
    return loss;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("rts_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace oracle
