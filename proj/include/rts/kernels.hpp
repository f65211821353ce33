#pragma once

#include <vector>

#include "rts/tensor.hpp"

namespace rts::kernels {

/// Square-kernel 2-D convolution geometry. Padding may be asymmetric so that
/// even kernels can keep the spatial size (pad_begin = 1, pad_end = 2 for k = 4).
struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad_begin = 1;
    int pad_end = 1;

    static ConvGeometry same(int k) { return {k, 1, (k - 1) / 2, k - 1 - (k - 1) / 2}; }
    static ConvGeometry strided(int k, int s) { return {k, s, (k - 1) / 2, (k - 1) / 2}; }

    int out_size(int in) const { return (in + pad_begin + pad_end - kernel) / stride + 1; }
};

// All tensors are NCHW; filters are [O, C, k, k].
Tensor conv2d(const Tensor& x, const Tensor& w, const ConvGeometry& g);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& w, const ConvGeometry& g, int in_h, int in_w);
/// Filter gradient summed over the batch: [O, C, k, k].
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& grad_out, const ConvGeometry& g);

/// Separable bilinear sampling table (align_corners = false, source clamped at 0).
struct ResizeTable {
    std::vector<int> lo, hi;
    std::vector<double> w_lo, w_hi;
};
ResizeTable bilinear_table(int in, int out);

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& grad_out, int in_h, int in_w);

/// 3x3 max pool, stride 1, padding 1 with -inf. argmax receives flat input indices.
Tensor max_pool3(const Tensor& x, std::vector<std::size_t>* argmax);

Tensor avg_pool(const Tensor& x, int factor);
Tensor avg_pool_backward(const Tensor& grad_out, int factor);

}  // namespace rts::kernels
