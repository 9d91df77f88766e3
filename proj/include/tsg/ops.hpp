#pragma once

#include <array>
#include <span>
#include <string>

#include "tsg/tensor.hpp"

namespace tsg {

enum class Act { gelu, sigmoid, tanh };
Act act_from_string(const std::string& s);

using Triple = std::array<int64_t, 3>;

// Elementwise on identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// y[..., o] = sum_i x[..., i] * w[o, i] + b[o]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-channel temporal convolution, zero padded to keep length. kernel[c, k], k odd.
Tensor dwconv1d(const Tensor& x, const Tensor& kernel);            // x[c, t]
Tensor dwconv1d_grouped(const Tensor& x, const Tensor& kernel);    // x[c, s, t]

// Cross-correlation. x[ci,t,h,w], kernel[co,ci,kt,kh,kw]; bias[co] optional
// (pass a default-constructed Tensor to skip).
Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              Triple stride, Triple pad);

// Affine-free normalization to zero mean / unit variance along one axis.
Tensor layer_normalize(const Tensor& x, int axis, double epsilon = 1e-5);

Tensor activation(const Tensor& x, Act kind);

// y = x * v broadcast over all axes except `axis` (v has shape[axis] elements).
Tensor mul_axis(const Tensor& x, const Tensor& v, int axis);

Tensor transpose(const Tensor& x, const std::vector<int>& perm);
Tensor reshape(const Tensor& x, Shape s);
Tensor slice0(const Tensor& x, int64_t begin, int64_t end);  // along axis 0
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor stack_rows(std::span<const Tensor> rows);             // n x [d] -> [n, d]
Tensor row_range_mean(const Tensor& x, int64_t r0, int64_t r1);  // [T,d] -> [d]
Tensor spatial_mean(const Tensor& x);                        // [c,t,h,w] -> [c,t]

Tensor sum_all(const Tensor& x);   // -> scalar [1]
Tensor mean_all(const Tensor& x);  // -> scalar [1]

Tensor log_t(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor smooth_l1(const Tensor& x);  // 0.5 x^2 for |x|<1 else |x|-0.5

// Mean of the embedding rows selected by ids. table[vocab, d].
Tensor embedding_mean(const Tensor& table, const std::vector<int>& ids);

}  // namespace tsg
