#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a graph node. Operations record their inputs and a
// backward closure only when gradient recording is enabled and at least one
// input requires a gradient, so inference under NoGradGuard builds no graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "rts/kernels.hpp"
#include "rts/tensor.hpp"

namespace rts::ag {

struct Node {
    Tensor value;
    Tensor grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor& g);
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    static Var parameter(Tensor value) { return Var(std::move(value), true); }
    static Var constant(Tensor value) { return Var(std::move(value), false); }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    /// Direct access for optimizer updates on leaf parameters.
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    double item() const { return node_->value.item(); }
    void zero_grad() { node_->grad = Tensor(); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Runs backpropagation from a scalar root, accumulating into leaf grads.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Records a hash of every discrete decision (relu sign pattern, max-pool
/// argmax, sort order, skipped solver steps) taken while alive. Two forward
/// passes with equal signatures lie on the same smooth piece of the function.
class BranchTrace {
public:
    BranchTrace();
    ~BranchTrace();
    BranchTrace(const BranchTrace&) = delete;
    BranchTrace& operator=(const BranchTrace&) = delete;

    std::uint64_t signature() const { return hash_; }

    static void record(const void* bytes, std::size_t n);
    static void record_bits(const std::vector<bool>& bits);
    static bool active();

private:
    std::uint64_t hash_;
    BranchTrace* previous_;
};

/// Builds an op result. `backward_fn` receives the result node; parents are in
/// the order given. The closure is dropped when no input requires a gradient.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

Var detach(const Var& x);

// Elementwise (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var add_const(const Var& a, const Tensor& c);
Var mul_const(const Var& a, const Tensor& c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);

/// x * s where s holds a single element.
Var scale(const Var& x, const Var& s);

// Reductions to shape {1}.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
Var dot(const Var& a, const Var& b);

// Shape manipulation.
Var reshape(const Var& a, Shape shape);
/// Concatenates rank-4 tensors along the batch axis.
Var concat_batch(const std::vector<Var>& parts);
Var slice_batch(const Var& x, int n);
Var concat_channels(const Var& a, const Var& b);

// Network ops (NCHW).
Var conv2d(const Var& x, const Var& w, const kernels::ConvGeometry& g);
/// Filter-shaped correlation of inputs with output-space maps, summed over the
/// batch; this is the adjoint of conv2d with respect to the filter.
Var conv2d_weight_grad(const Var& x, const Var& grad_out, const kernels::ConvGeometry& g);
Var add_channel_bias(const Var& x, const Var& bias);
/// x[N,C,H,W] * w[N,1,H,W] broadcast over channels.
Var mul_channel_broadcast(const Var& x, const Var& w);
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var max_pool3(const Var& x);
Var avg_pool(const Var& x, int factor);

}  // namespace rts::ag
