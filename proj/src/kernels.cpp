#include "rts/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rts/errors.hpp"

namespace rts::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) throw ConfigError(std::string(what) + " must be rank 4, got " + shape_str(t.shape()));
}

// cols: [C*k*k, Ho*Wo] for one sample.
void im2col(const double* x, int C, int H, int W, const ConvGeometry& g, int Ho, int Wo, double* cols) {
    const int k = g.kernel;
    const int s = g.stride;
    const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                double* row = cols + (static_cast<std::size_t>(c) * k * k + u * k + v) * hw;
                for (int i = 0; i < Ho; ++i) {
                    const int yi = i * s + u - g.pad_begin;
                    double* out = row + static_cast<std::size_t>(i) * Wo;
                    if (yi < 0 || yi >= H) {
                        std::fill(out, out + Wo, 0.0);
                        continue;
                    }
                    const double* xr = xc + static_cast<std::size_t>(yi) * W;
                    for (int j = 0; j < Wo; ++j) {
                        const int xj = j * s + v - g.pad_begin;
                        out[j] = (xj >= 0 && xj < W) ? xr[xj] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* cols, int C, int H, int W, const ConvGeometry& g, int Ho, int Wo, double* x) {
    const int k = g.kernel;
    const int s = g.stride;
    const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const double* row = cols + (static_cast<std::size_t>(c) * k * k + u * k + v) * hw;
                for (int i = 0; i < Ho; ++i) {
                    const int yi = i * s + u - g.pad_begin;
                    if (yi < 0 || yi >= H) continue;
                    double* xr = xc + static_cast<std::size_t>(yi) * W;
                    const double* in = row + static_cast<std::size_t>(i) * Wo;
                    for (int j = 0; j < Wo; ++j) {
                        const int xj = j * s + v - g.pad_begin;
                        if (xj >= 0 && xj < W) xr[xj] += in[j];
                    }
                }
            }
        }
    }
}

void check_filter(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
    check_rank4(x, "conv input");
    check_rank4(w, "conv filter");
    if (w.dim(1) != x.dim(1))
        throw ConfigError("conv channel mismatch: input " + shape_str(x.shape()) + " filter " + shape_str(w.shape()));
    if (w.dim(2) != g.kernel || w.dim(3) != g.kernel) throw ConfigError("filter size does not match geometry");
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
    check_filter(x, w, g);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0);
    const int Ho = g.out_size(H), Wo = g.out_size(W);
    if (Ho <= 0 || Wo <= 0) throw ConfigError("conv output would be empty for input " + shape_str(x.shape()));
    const int kk = C * g.kernel * g.kernel;
    const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;

    Tensor y({N, O, Ho, Wo});
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    ConstMapMat wm(w.data(), O, kk);
    for (int n = 0; n < N; ++n) {
        im2col(x.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, g, Ho, Wo, cols.data());
        MapMat ym(y.data() + static_cast<std::size_t>(n) * O * hw, O, static_cast<Eigen::Index>(hw));
        ym.noalias() = wm * ConstMapMat(cols.data(), kk, static_cast<Eigen::Index>(hw));
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& w, const ConvGeometry& g, int in_h, int in_w) {
    check_rank4(grad_out, "conv grad_out");
    check_rank4(w, "conv filter");
    const int N = grad_out.dim(0), O = grad_out.dim(1), Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    if (w.dim(0) != O) throw ConfigError("conv backward: filter/grad channel mismatch");
    const int C = w.dim(1);
    const int kk = C * g.kernel * g.kernel;
    const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;

    Tensor gx({N, C, in_h, in_w});
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    ConstMapMat wm(w.data(), O, kk);
    for (int n = 0; n < N; ++n) {
        MapMat cm(cols.data(), kk, static_cast<Eigen::Index>(hw));
        cm.noalias() =
            wm.transpose() * ConstMapMat(grad_out.data() + static_cast<std::size_t>(n) * O * hw, O,
                                         static_cast<Eigen::Index>(hw));
        col2im(cols.data(), C, in_h, in_w, g, Ho, Wo, gx.data() + static_cast<std::size_t>(n) * C * in_h * in_w);
    }
    return gx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& grad_out, const ConvGeometry& g) {
    check_rank4(x, "conv input");
    check_rank4(grad_out, "conv grad_out");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = grad_out.dim(1), Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    if (grad_out.dim(0) != N || Ho != g.out_size(H) || Wo != g.out_size(W))
        throw ConfigError("conv weight grad: incompatible shapes " + shape_str(x.shape()) + " and " +
                          shape_str(grad_out.shape()));
    const int kk = C * g.kernel * g.kernel;
    const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;

    Tensor gw({O, C, g.kernel, g.kernel});
    MapMat gwm(gw.data(), O, kk);
    std::vector<double> cols(static_cast<std::size_t>(kk) * hw);
    for (int n = 0; n < N; ++n) {
        im2col(x.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, g, Ho, Wo, cols.data());
        gwm.noalias() += ConstMapMat(grad_out.data() + static_cast<std::size_t>(n) * O * hw, O,
                                     static_cast<Eigen::Index>(hw)) *
                         ConstMapMat(cols.data(), kk, static_cast<Eigen::Index>(hw)).transpose();
    }
    return gw;
}

ResizeTable bilinear_table(int in, int out) {
    ResizeTable t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.w_lo.resize(out);
    t.w_hi.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        const double frac = src - i0;
        t.lo[o] = i0;
        t.hi[o] = i1;
        t.w_lo[o] = 1.0 - frac;
        t.w_hi[o] = frac;
    }
    return t;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    check_rank4(x, "resize input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const ResizeTable th = bilinear_table(H, out_h);
    const ResizeTable tw = bilinear_table(W, out_w);
    Tensor y({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < out_h; ++i)
                for (int j = 0; j < out_w; ++j) {
                    const double top = tw.w_lo[j] * x.at(n, c, th.lo[i], tw.lo[j]) + tw.w_hi[j] * x.at(n, c, th.lo[i], tw.hi[j]);
                    const double bot = tw.w_lo[j] * x.at(n, c, th.hi[i], tw.lo[j]) + tw.w_hi[j] * x.at(n, c, th.hi[i], tw.hi[j]);
                    y.at(n, c, i, j) = th.w_lo[i] * top + th.w_hi[i] * bot;
                }
    return y;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, int in_h, int in_w) {
    const int N = grad_out.dim(0), C = grad_out.dim(1), Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    const ResizeTable th = bilinear_table(in_h, Ho);
    const ResizeTable tw = bilinear_table(in_w, Wo);
    Tensor gx({N, C, in_h, in_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    const double g = grad_out.at(n, c, i, j);
                    gx.at(n, c, th.lo[i], tw.lo[j]) += g * th.w_lo[i] * tw.w_lo[j];
                    gx.at(n, c, th.lo[i], tw.hi[j]) += g * th.w_lo[i] * tw.w_hi[j];
                    gx.at(n, c, th.hi[i], tw.lo[j]) += g * th.w_hi[i] * tw.w_lo[j];
                    gx.at(n, c, th.hi[i], tw.hi[j]) += g * th.w_hi[i] * tw.w_hi[j];
                }
    return gx;
}

Tensor max_pool3(const Tensor& x, std::vector<std::size_t>* argmax) {
    check_rank4(x, "max_pool input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape());
    if (argmax) argmax->assign(y.size(), 0);
    std::size_t out = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j, ++out) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = base + static_cast<std::size_t>(i) * W + j;
                    for (int di = -1; di <= 1; ++di) {
                        const int yi = i + di;
                        if (yi < 0 || yi >= H) continue;
                        for (int dj = -1; dj <= 1; ++dj) {
                            const int xj = j + dj;
                            if (xj < 0 || xj >= W) continue;
                            const std::size_t idx = base + static_cast<std::size_t>(yi) * W + xj;
                            if (x[idx] > best) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    y[out] = best;
                    if (argmax) (*argmax)[out] = best_idx;
                }
        }
    return y;
}

Tensor avg_pool(const Tensor& x, int factor) {
    check_rank4(x, "avg_pool input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (factor <= 0 || H % factor || W % factor)
        throw ConfigError("avg_pool: size " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor));
    const int Ho = H / factor, Wo = W / factor;
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    Tensor y({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) y.at(n, c, i / factor, j / factor) += inv * x.at(n, c, i, j);
    return y;
}

Tensor avg_pool_backward(const Tensor& grad_out, int factor) {
    const int N = grad_out.dim(0), C = grad_out.dim(1), Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    Tensor gx({N, C, Ho * factor, Wo * factor});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho * factor; ++i)
                for (int j = 0; j < Wo * factor; ++j) gx.at(n, c, i, j) = inv * grad_out.at(n, c, i / factor, j / factor);
    return gx;
}

}  // namespace rts::kernels
