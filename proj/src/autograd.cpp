#include "rts/autograd.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>

#include "rts/errors.hpp"

namespace rts::ag {

namespace {

thread_local bool g_grad_enabled = true;
thread_local BranchTrace* g_trace = nullptr;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

bool wants(Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

template <class F>
Tensor map_unary(const Tensor& x, F f) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return y;
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
        return;
    }
    axpy(1.0, g, grad);
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

BranchTrace::BranchTrace() : hash_(kFnvOffset), previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }

bool BranchTrace::active() { return g_trace != nullptr; }

void BranchTrace::record(const void* bytes, std::size_t n) {
    if (!g_trace) return;
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = g_trace->hash_;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    g_trace->hash_ = h;
}

void BranchTrace::record_bits(const std::vector<bool>& bits) {
    if (!g_trace) return;
    std::uint64_t word = 0;
    int used = 0;
    for (bool b : bits) {
        word = (word << 1) | (b ? 1u : 0u);
        if (++used == 64) {
            record(&word, sizeof word);
            word = 0;
            used = 0;
        }
    }
    record(&word, sizeof word);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    bool needs = false;
    if (g_grad_enabled)
        for (const Var& p : parents) needs = needs || p.requires_grad();
    Var out(std::move(value), needs);
    if (needs) {
        Node& n = *out.node();
        n.parents.reserve(parents.size());
        for (const Var& p : parents) n.parents.push_back(p.node());
        n.backward_fn = std::move(backward_fn);
    }
    return out;
}

void backward(const Var& root) {
    if (!root.defined()) throw InvalidState("backward on undefined variable");
    if (root.value().size() != 1) throw ConfigError("backward root must be a scalar");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->accumulate(Tensor(root.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward_fn || n->grad.empty()) continue;
        n->backward_fn(*n);
        n->grad = Tensor();
    }
}

Var detach(const Var& x) { return Var(x.value(), false); }

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
        if (wants(n, 0)) parent(n, 0).accumulate(n.grad);
        if (wants(n, 1)) parent(n, 1).accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
        if (wants(n, 0)) parent(n, 0).accumulate(n.grad);
        if (wants(n, 1)) parent(n, 1).accumulate(-1.0 * n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        const Tensor& av = parent(n, 0).value;
        const Tensor& bv = parent(n, 1).value;
        if (wants(n, 0)) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= bv[i];
            parent(n, 0).accumulate(g);
        }
        if (wants(n, 1)) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= av[i];
            parent(n, 1).accumulate(g);
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same(a, b, "div");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= b.value()[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        const Tensor& bv = parent(n, 1).value;
        if (wants(n, 0)) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] /= bv[i];
            parent(n, 0).accumulate(g);
        }
        if (wants(n, 1)) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= -n.value[i] / bv[i];
            parent(n, 1).accumulate(g);
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
    return make_op(map_unary(a.value(), [s](double v) { return v + s; }), {a},
                   [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Var mul_scalar(const Var& a, double s) {
    return make_op(s * a.value(), {a}, [s](Node& n) { parent(n, 0).accumulate(s * n.grad); });
}

Var add_const(const Var& a, const Tensor& c) {
    if (a.value().size() != c.size()) throw ConfigError("add_const: size mismatch");
    return make_op(a.value() + c.reshaped(a.shape()), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Var mul_const(const Var& a, const Tensor& c) {
    if (a.value().size() != c.size()) throw ConfigError("mul_const: size mismatch");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
    return make_op(std::move(y), {a}, [c](Node& n) {
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= c[i];
        parent(n, 0).accumulate(g);
    });
}

Var relu(const Var& a) {
    const Tensor& x = a.value();
    if (BranchTrace::active()) {
        std::vector<bool> bits(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) bits[i] = x[i] > 0.0;
        BranchTrace::record_bits(bits);
    }
    return make_op(map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; }), {a}, [](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(xv[i] > 0.0)) g[i] = 0.0;
        parent(n, 0).accumulate(g);
    });
}

Var sigmoid(const Var& a) {
    return make_op(map_unary(a.value(), stable_sigmoid), {a}, [](Node& n) {
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= n.value[i] * (1.0 - n.value[i]);
        parent(n, 0).accumulate(g);
    });
}

Var softplus(const Var& a) {
    return make_op(map_unary(a.value(), stable_softplus), {a}, [](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= stable_sigmoid(xv[i]);
        parent(n, 0).accumulate(g);
    });
}

Var square(const Var& a) {
    return make_op(map_unary(a.value(), [](double v) { return v * v; }), {a}, [](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        Tensor g = n.grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * xv[i];
        parent(n, 0).accumulate(g);
    });
}

Var scale(const Var& x, const Var& s) {
    if (s.value().size() != 1) throw ConfigError("scale: factor must hold one element");
    const double sv = s.item();
    return make_op(sv * x.value(), {x, s}, [](Node& n) {
        const double sv = parent(n, 1).value[0];
        if (wants(n, 0)) parent(n, 0).accumulate(sv * n.grad);
        if (wants(n, 1)) parent(n, 1).accumulate(Tensor::scalar(rts::dot(n.grad, parent(n, 0).value)));
    });
}

Var sum(const Var& a) {
    return make_op(Tensor::scalar(rts::sum(a.value())), {a}, [](Node& n) {
        parent(n, 0).accumulate(Tensor(parent(n, 0).value.shape(), n.grad[0]));
    });
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a.value().size());
    return mul_scalar(sum(a), inv);
}

Var sum_squares(const Var& a) {
    return make_op(Tensor::scalar(squared_norm(a.value())), {a},
                   [](Node& n) { parent(n, 0).accumulate((2.0 * n.grad[0]) * parent(n, 0).value); });
}

Var dot(const Var& a, const Var& b) {
    require_same(a, b, "dot");
    return make_op(Tensor::scalar(rts::dot(a.value(), b.value())), {a, b}, [](Node& n) {
        if (wants(n, 0)) parent(n, 0).accumulate(n.grad[0] * parent(n, 1).value);
        if (wants(n, 1)) parent(n, 1).accumulate(n.grad[0] * parent(n, 0).value);
    });
}

Var reshape(const Var& a, Shape shape) {
    return make_op(a.value().reshaped(std::move(shape)), {a},
                   [](Node& n) { parent(n, 0).accumulate(n.grad.reshaped(parent(n, 0).value.shape())); });
}

Var concat_batch(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_batch: no inputs");
    const Shape& s0 = parts.front().shape();
    if (s0.size() != 4) throw ConfigError("concat_batch: inputs must be rank 4");
    int total = 0;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 4 || s[1] != s0[1] || s[2] != s0[2] || s[3] != s0[3])
            throw ConfigError("concat_batch: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        total += s[0];
    }
    Tensor y({total, s0[1], s0[2], s0[3]});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data(), p.value().data() + p.value().size(), y.data() + off);
        off += p.value().size();
    }
    return make_op(std::move(y), parts, [](Node& n) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            const Tensor& pv = parent(n, i).value;
            if (wants(n, i)) {
                Tensor g(pv.shape());
                std::copy(n.grad.data() + off, n.grad.data() + off + pv.size(), g.data());
                parent(n, i).accumulate(g);
            }
            off += pv.size();
        }
    });
}

Var slice_batch(const Var& x, int idx) {
    const Shape& s = x.shape();
    if (s.size() != 4 || idx < 0 || idx >= s[0]) throw ConfigError("slice_batch: index out of range");
    const std::size_t chunk = static_cast<std::size_t>(s[1]) * s[2] * s[3];
    Tensor y({1, s[1], s[2], s[3]});
    std::copy(x.value().data() + idx * chunk, x.value().data() + (idx + 1) * chunk, y.data());
    return make_op(std::move(y), {x}, [idx, chunk](Node& n) {
        Tensor g(parent(n, 0).value.shape());
        std::copy(n.grad.data(), n.grad.data() + chunk, g.data() + idx * chunk);
        parent(n, 0).accumulate(g);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw ConfigError("concat_channels: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
    const int N = sa[0], Ca = sa[1], Cb = sb[1];
    const std::size_t hw = static_cast<std::size_t>(sa[2]) * sa[3];
    Tensor y({N, Ca + Cb, sa[2], sa[3]});
    for (int n = 0; n < N; ++n) {
        std::copy(a.value().data() + n * Ca * hw, a.value().data() + (n + 1) * Ca * hw, y.data() + n * (Ca + Cb) * hw);
        std::copy(b.value().data() + n * Cb * hw, b.value().data() + (n + 1) * Cb * hw,
                  y.data() + (n * (Ca + Cb) + Ca) * hw);
    }
    return make_op(std::move(y), {a, b}, [N, Ca, Cb, hw](Node& n) {
        if (wants(n, 0)) {
            Tensor g(parent(n, 0).value.shape());
            for (int i = 0; i < N; ++i)
                std::copy(n.grad.data() + i * (Ca + Cb) * hw, n.grad.data() + (i * (Ca + Cb) + Ca) * hw, g.data() + i * Ca * hw);
            parent(n, 0).accumulate(g);
        }
        if (wants(n, 1)) {
            Tensor g(parent(n, 1).value.shape());
            for (int i = 0; i < N; ++i)
                std::copy(n.grad.data() + (i * (Ca + Cb) + Ca) * hw, n.grad.data() + (i + 1) * (Ca + Cb) * hw,
                          g.data() + i * Cb * hw);
            parent(n, 1).accumulate(g);
        }
    });
}

Var conv2d(const Var& x, const Var& w, const kernels::ConvGeometry& g) {
    return make_op(kernels::conv2d(x.value(), w.value(), g), {x, w}, [g](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        if (wants(n, 0))
            parent(n, 0).accumulate(kernels::conv2d_backward_input(n.grad, parent(n, 1).value, g, xv.dim(2), xv.dim(3)));
        if (wants(n, 1)) parent(n, 1).accumulate(kernels::conv2d_backward_weight(xv, n.grad, g));
    });
}

Var conv2d_weight_grad(const Var& x, const Var& grad_out, const kernels::ConvGeometry& g) {
    // y = W(x, r) is bilinear: dL/dx = conv^T(r, G), dL/dr = conv(x, G) with G = dL/dy.
    return make_op(kernels::conv2d_backward_weight(x.value(), grad_out.value(), g), {x, grad_out}, [g](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        if (wants(n, 0))
            parent(n, 0).accumulate(kernels::conv2d_backward_input(parent(n, 1).value, n.grad, g, xv.dim(2), xv.dim(3)));
        if (wants(n, 1)) parent(n, 1).accumulate(kernels::conv2d(xv, n.grad, g));
    });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const Shape& s = x.shape();
    if (s.size() != 4 || bias.value().size() != static_cast<std::size_t>(s[1]))
        throw ConfigError("add_channel_bias: bias size does not match channels of " + shape_str(s));
    const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
    Tensor y = x.value();
    for (int n = 0; n < s[0]; ++n)
        for (int c = 0; c < s[1]; ++c) {
            double* p = y.data() + (static_cast<std::size_t>(n) * s[1] + c) * hw;
            const double b = bias.value()[c];
            for (std::size_t i = 0; i < hw; ++i) p[i] += b;
        }
    return make_op(std::move(y), {x, bias}, [s, hw](Node& n) {
        if (wants(n, 0)) parent(n, 0).accumulate(n.grad);
        if (wants(n, 1)) {
            Tensor gb(parent(n, 1).value.shape());
            for (int b = 0; b < s[0]; ++b)
                for (int c = 0; c < s[1]; ++c) {
                    const double* p = n.grad.data() + (static_cast<std::size_t>(b) * s[1] + c) * hw;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) acc += p[i];
                    gb[c] += acc;
                }
            parent(n, 1).accumulate(gb);
        }
    });
}

Var mul_channel_broadcast(const Var& x, const Var& w) {
    const Shape& s = x.shape();
    const Shape& sw = w.shape();
    if (s.size() != 4 || sw.size() != 4 || sw[0] != s[0] || sw[1] != 1 || sw[2] != s[2] || sw[3] != s[3])
        throw ConfigError("mul_channel_broadcast: incompatible shapes " + shape_str(s) + " and " + shape_str(sw));
    const std::size_t hw = static_cast<std::size_t>(s[2]) * s[3];
    Tensor y = x.value();
    for (int n = 0; n < s[0]; ++n)
        for (int c = 0; c < s[1]; ++c) {
            double* p = y.data() + (static_cast<std::size_t>(n) * s[1] + c) * hw;
            const double* q = w.value().data() + static_cast<std::size_t>(n) * hw;
            for (std::size_t i = 0; i < hw; ++i) p[i] *= q[i];
        }
    return make_op(std::move(y), {x, w}, [s, hw](Node& n) {
        const Tensor& xv = parent(n, 0).value;
        const Tensor& wv = parent(n, 1).value;
        if (wants(n, 0)) {
            Tensor g = n.grad;
            for (int b = 0; b < s[0]; ++b)
                for (int c = 0; c < s[1]; ++c) {
                    double* p = g.data() + (static_cast<std::size_t>(b) * s[1] + c) * hw;
                    const double* q = wv.data() + static_cast<std::size_t>(b) * hw;
                    for (std::size_t i = 0; i < hw; ++i) p[i] *= q[i];
                }
            parent(n, 0).accumulate(g);
        }
        if (wants(n, 1)) {
            Tensor g(wv.shape());
            for (int b = 0; b < s[0]; ++b)
                for (int c = 0; c < s[1]; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * s[1] + c) * hw;
                    double* q = g.data() + static_cast<std::size_t>(b) * hw;
                    for (std::size_t i = 0; i < hw; ++i) q[i] += n.grad[off + i] * xv[off + i];
                }
            parent(n, 1).accumulate(g);
        }
    });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const int in_h = x.dim(2), in_w = x.dim(3);
    return make_op(kernels::resize_bilinear(x.value(), out_h, out_w), {x}, [in_h, in_w](Node& n) {
        parent(n, 0).accumulate(kernels::resize_bilinear_backward(n.grad, in_h, in_w));
    });
}

Var max_pool3(const Var& x) {
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    Tensor y = kernels::max_pool3(x.value(), argmax.get());
    if (BranchTrace::active()) BranchTrace::record(argmax->data(), argmax->size() * sizeof(std::size_t));
    return make_op(std::move(y), {x}, [argmax](Node& n) {
        Tensor g(parent(n, 0).value.shape());
        for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += n.grad[i];
        parent(n, 0).accumulate(g);
    });
}

Var avg_pool(const Var& x, int factor) {
    return make_op(kernels::avg_pool(x.value(), factor), {x},
                   [factor](Node& n) { parent(n, 0).accumulate(kernels::avg_pool_backward(n.grad, factor)); });
}

}  // namespace rts::ag
