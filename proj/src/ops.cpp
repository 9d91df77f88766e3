#include "tsg/ops.hpp"

#include <cmath>

#include "tsg/errors.hpp"
#include "tsg/kernels.hpp"

namespace tsg {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Grad buffers for interior nodes are allocated lazily by backward().
Tensor op_out(Shape s, std::initializer_list<Tensor> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(s);
  n->value.resize(static_cast<size_t>(shape_numel(n->shape)));
  bool rg = false;
  if (grad_enabled())
    for (const Tensor& p : parents)
      if (p.defined() && p.requires_grad()) rg = true;
  n->requires_grad = rg;
  if (rg)
    for (const Tensor& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
  return Tensor(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
}

// Elementwise binary with constant partials (1 for add, +/-1 for sub).
Tensor ew_linear(const Tensor& a, const Tensor& b, double ca, double cb,
                 const char* name) {
  check_same_shape(a, b, name);
  Tensor y = op_out(a.shape(), {a, b});
  const double* pa = a.data();
  const double* pb = b.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] = ca * pa[i] + cb * pb[i];
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    self->backprop = [self, na, nb, ca, cb] {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
          na->grad[i] += ca * self->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
          nb->grad[i] += cb * self->grad[i];
      }
    };
  }
  return y;
}

}  // namespace

Act act_from_string(const std::string& s) {
  if (s == "gelu") return Act::gelu;
  if (s == "sigmoid") return Act::sigmoid;
  if (s == "tanh") return Act::tanh;
  throw ConfigError("unknown activation kind '" + s + "'");
}

Tensor add(const Tensor& a, const Tensor& b) { return ew_linear(a, b, 1, 1, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return ew_linear(a, b, 1, -1, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = op_out(a.shape(), {a, b});
  const double* pa = a.data();
  const double* pb = b.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] = pa[i] * pb[i];
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    self->backprop = [self, na, nb] {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
          na->grad[i] += nb->value[i] * self->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
          nb->grad[i] += na->value[i] * self->grad[i];
      }
    };
  }
  return y;
}

Tensor scale(const Tensor& a, double c) {
  Tensor y = op_out(a.shape(), {a});
  const double* pa = a.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] = c * pa[i];
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* na = a.node().get();
    self->backprop = [self, na, c] {
      na->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        na->grad[i] += c * self->grad[i];
    };
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("linear: expected x[..., in], w[out, in], b[out], got x" +
                         shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         " b" + shape_str(b.shape()));
  const int64_t in = x.dim(x.rank() - 1);
  const int64_t out = w.dim(0);
  if (w.dim(1) != in || b.dim(0) != out)
    throw DimensionError("linear: x" + shape_str(x.shape()) + " incompatible with w" +
                         shape_str(w.shape()) + " b" + shape_str(b.shape()));
  const int64_t n = x.numel() / in;

  Shape ys = x.shape();
  ys.back() = out;
  Tensor y = op_out(std::move(ys), {x, w, b});
  kern::gemm_nt(x.data(), w.data(), b.data(), y.data(), n, in, out);

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = b.node().get();
    self->backprop = [self, nx, nw, nb, n, in, out] {
      const double* dy = self->grad.data();
      if (nx->requires_grad) {
        nx->ensure_grad();
        kern::gemm_nn_acc(dy, nw->value.data(), nx->grad.data(), n, out, in);
      }
      if (nw->requires_grad) {
        nw->ensure_grad();
        kern::gemm_tn_acc(dy, nx->value.data(), nw->grad.data(), n, out, in);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (int64_t o = 0; o < out; ++o) {
          double acc = 0.0;
          for (int64_t i = 0; i < n; ++i) acc += dy[i * out + o];
          nb->grad[o] += acc;
        }
      }
    };
  }
  return y;
}

namespace {
Tensor dwconv_impl(const Tensor& x, const Tensor& kernel, int64_t c, int64_t s,
                   int64_t t) {
  if (kernel.rank() != 2 || kernel.dim(0) != c)
    throw DimensionError("dwconv1d: kernel" + shape_str(kernel.shape()) +
                         " does not match " + std::to_string(c) + " channels");
  const int64_t klen = kernel.dim(1);
  if (klen % 2 == 0)
    throw ConfigError("dwconv1d kernel length must be odd, got " + std::to_string(klen));

  Tensor y = op_out(x.shape(), {x, kernel});
  kern::dwconv1d_fwd(x.data(), kernel.data(), y.data(), c, s, t, klen);

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    Node* nk = kernel.node().get();
    self->backprop = [self, nx, nk, c, s, t, klen] {
      const double* dy = self->grad.data();
      if (nx->requires_grad) {
        nx->ensure_grad();
        kern::dwconv1d_bwd_input_acc(dy, nk->value.data(), nx->grad.data(), c, s, t, klen);
      }
      if (nk->requires_grad) {
        nk->ensure_grad();
        kern::dwconv1d_bwd_kernel_acc(dy, nx->value.data(), nk->grad.data(), c, s, t, klen);
      }
    };
  }
  return y;
}
}  // namespace

Tensor dwconv1d(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 2)
    throw DimensionError("dwconv1d: expected x[c, t], got " + shape_str(x.shape()));
  return dwconv_impl(x, kernel, x.dim(0), 1, x.dim(1));
}

Tensor dwconv1d_grouped(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3)
    throw DimensionError("dwconv1d_grouped: expected x[c, s, t], got " + shape_str(x.shape()));
  return dwconv_impl(x, kernel, x.dim(0), x.dim(1), x.dim(2));
}

Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              Triple stride, Triple pad) {
  if (x.rank() != 4 || kernel.rank() != 5)
    throw DimensionError("conv3d: expected x[ci,t,h,w], kernel[co,ci,kt,kh,kw], got x" +
                         shape_str(x.shape()) + " kernel" + shape_str(kernel.shape()));
  if (kernel.dim(1) != x.dim(0))
    throw DimensionError("conv3d: input channels " + std::to_string(x.dim(0)) +
                         " vs kernel channels " + std::to_string(kernel.dim(1)));
  kern::Conv3dDims d;
  d.ci = x.dim(0); d.ti = x.dim(1); d.hi = x.dim(2); d.wi = x.dim(3);
  d.co = kernel.dim(0); d.kt = kernel.dim(2); d.kh = kernel.dim(3); d.kw = kernel.dim(4);
  d.st = stride[0]; d.sh = stride[1]; d.sw = stride[2];
  d.pt = pad[0]; d.ph = pad[1]; d.pw = pad[2];
  d.to = (d.ti + 2 * d.pt - d.kt) / d.st + 1;
  d.ho = (d.hi + 2 * d.ph - d.kh) / d.sh + 1;
  d.wo = (d.wi + 2 * d.pw - d.kw) / d.sw + 1;
  if (d.ti + 2 * d.pt < d.kt || d.hi + 2 * d.ph < d.kh || d.wi + 2 * d.pw < d.kw)
    throw DimensionError("conv3d: empty output volume for x" + shape_str(x.shape()) +
                         " kernel" + shape_str(kernel.shape()));
  if (bias.defined() && bias.numel() != d.co)
    throw DimensionError("conv3d: bias" + shape_str(bias.shape()) + " vs " +
                         std::to_string(d.co) + " output channels");

  Tensor y = bias.defined()
                 ? op_out({d.co, d.to, d.ho, d.wo}, {x, kernel, bias})
                 : op_out({d.co, d.to, d.ho, d.wo}, {x, kernel});
  kern::conv3d_fwd(x.data(), kernel.data(), bias.defined() ? bias.data() : nullptr,
                   y.data(), d);

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    Node* nk = kernel.node().get();
    Node* nb = bias.defined() ? bias.node().get() : nullptr;
    self->backprop = [self, nx, nk, nb, d] {
      const double* dy = self->grad.data();
      if (nx->requires_grad) {
        nx->ensure_grad();
        kern::conv3d_bwd_input_acc(dy, nk->value.data(), nx->grad.data(), d);
      }
      if (nk->requires_grad) {
        nk->ensure_grad();
        kern::conv3d_bwd_kernel_acc(dy, nx->value.data(), nk->grad.data(), d);
      }
      if (nb && nb->requires_grad) {
        nb->ensure_grad();
        const int64_t plane = d.to * d.ho * d.wo;
        for (int64_t co = 0; co < d.co; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += dy[co * plane + i];
          nb->grad[co] += acc;
        }
      }
    };
  }
  return y;
}

Tensor layer_normalize(const Tensor& x, int axis, double epsilon) {
  if (axis < 0 || axis >= x.rank())
    throw DimensionError("layer_normalize: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
  int64_t outer = 1, inner = 1;
  const int64_t n = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Tensor y = op_out(x.shape(), {x});
  auto inv_std = std::make_shared<std::vector<double>>(
      static_cast<size_t>(outer * inner));
  const double* px = x.data();
  double* py = y.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      double mean = 0.0;
      for (int64_t j = 0; j < n; ++j) mean += px[base + j * inner];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double dv = px[base + j * inner] - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(n);
      double r = 1.0 / std::sqrt(var + epsilon);
      (*inv_std)[static_cast<size_t>(o * inner + i)] = r;
      for (int64_t j = 0; j < n; ++j)
        py[base + j * inner] = (px[base + j * inner] - mean) * r;
    }
  }

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, inv_std, outer, inner, n] {
      nx->ensure_grad();
      const double* dy = self->grad.data();
      const double* yv = self->value.data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t base = o * n * inner + i;
          const double r = (*inv_std)[static_cast<size_t>(o * inner + i)];
          double mg = 0.0, mgy = 0.0;
          for (int64_t j = 0; j < n; ++j) {
            mg += dy[base + j * inner];
            mgy += dy[base + j * inner] * yv[base + j * inner];
          }
          mg /= static_cast<double>(n);
          mgy /= static_cast<double>(n);
          for (int64_t j = 0; j < n; ++j)
            nx->grad[base + j * inner] +=
                r * (dy[base + j * inner] - mg - yv[base + j * inner] * mgy);
        }
      }
    };
  }
  return y;
}

Tensor activation(const Tensor& x, Act kind) {
  Tensor y = op_out(x.shape(), {x});
  const double* px = x.data();
  double* py = y.data();
  switch (kind) {
    case Act::gelu:
      for (int64_t i = 0; i < y.numel(); ++i)
        py[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
      break;
    case Act::sigmoid:
      for (int64_t i = 0; i < y.numel(); ++i)
        py[i] = 1.0 / (1.0 + std::exp(-px[i]));
      break;
    case Act::tanh:
      for (int64_t i = 0; i < y.numel(); ++i) py[i] = std::tanh(px[i]);
      break;
  }
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, kind] {
      nx->ensure_grad();
      const double* dy = self->grad.data();
      const double* xv = nx->value.data();
      const double* yv = self->value.data();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        double d;
        switch (kind) {
          case Act::gelu:
            d = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2)) +
                xv[i] * kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
            break;
          case Act::sigmoid:
            d = yv[i] * (1.0 - yv[i]);
            break;
          default:
            d = 1.0 - yv[i] * yv[i];
            break;
        }
        nx->grad[i] += d * dy[i];
      }
    };
  }
  return y;
}

Tensor mul_axis(const Tensor& x, const Tensor& v, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw DimensionError("mul_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
  const int64_t n = x.dim(axis);
  if (v.numel() != n)
    throw DimensionError("mul_axis: v" + shape_str(v.shape()) + " vs axis size " +
                         std::to_string(n) + " of " + shape_str(x.shape()));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Tensor y = op_out(x.shape(), {x, v});
  const double* px = x.data();
  const double* pv = v.data();
  double* py = y.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < n; ++j) {
      const int64_t base = (o * n + j) * inner;
      for (int64_t i = 0; i < inner; ++i) py[base + i] = px[base + i] * pv[j];
    }

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    Node* nv = v.node().get();
    self->backprop = [self, nx, nv, outer, n, inner] {
      const double* dy = self->grad.data();
      if (nx->requires_grad) {
        nx->ensure_grad();
        const double* pv = nv->value.data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t j = 0; j < n; ++j) {
            const int64_t base = (o * n + j) * inner;
            for (int64_t i = 0; i < inner; ++i)
              nx->grad[base + i] += dy[base + i] * pv[j];
          }
      }
      if (nv->requires_grad) {
        nv->ensure_grad();
        const double* px = nx->value.data();
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t o = 0; o < outer; ++o) {
            const int64_t base = (o * n + j) * inner;
            for (int64_t i = 0; i < inner; ++i) acc += dy[base + i] * px[base + i];
          }
          nv->grad[j] += acc;
        }
      }
    };
  }
  return y;
}

namespace {
// Walks the input linearly; out_idx advances by the output stride of the
// axis each input axis maps to. Gather=false scatters values into out;
// gather=true accumulates out (a grad buffer) back into in.
template <bool Gather, typename In, typename Out>
void permute_walk(const Shape& in_shape, const std::vector<int64_t>& strides,
                  In* in, Out* out) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t out_idx = 0;
  const int64_t total = shape_numel(in_shape);
  for (int64_t lin = 0; lin < total; ++lin) {
    if constexpr (Gather)
      in[lin] += out[out_idx];
    else
      out[out_idx] = in[lin];
    for (int a = r - 1; a >= 0; --a) {
      out_idx += strides[static_cast<size_t>(a)];
      if (++idx[static_cast<size_t>(a)] < in_shape[static_cast<size_t>(a)]) break;
      out_idx -= strides[static_cast<size_t>(a)] * in_shape[static_cast<size_t>(a)];
      idx[static_cast<size_t>(a)] = 0;
    }
  }
}
}  // namespace

Tensor transpose(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r)
    throw DimensionError("transpose: perm size " + std::to_string(perm.size()) +
                         " vs rank " + std::to_string(r));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
      throw DimensionError("transpose: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    out_shape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);

  // output stride of the output axis each input axis lands on
  std::vector<int64_t> out_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    out_strides[static_cast<size_t>(i)] = out_strides[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
  auto strides = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    (*strides)[static_cast<size_t>(perm[static_cast<size_t>(i)])] = out_strides[static_cast<size_t>(i)];

  Tensor y = op_out(std::move(out_shape), {x});
  permute_walk<false>(x.shape(), *strides, x.data(), y.data());

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, strides] {
      nx->ensure_grad();
      permute_walk<true>(nx->shape, *strides, nx->grad.data(), self->grad.data());
    };
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(s) +
                         " changes element count");
  Tensor y = op_out(std::move(s), {x});
  y.values() = x.values();
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx] {
      nx->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) nx->grad[i] += self->grad[i];
    };
  }
  return y;
}

Tensor slice0(const Tensor& x, int64_t begin, int64_t end) {
  if (x.rank() < 1 || begin < 0 || begin >= end || end > x.dim(0))
    throw DimensionError("slice0: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  int64_t inner = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = end - begin;
  Tensor y = op_out(std::move(s), {x});
  const double* px = x.data() + begin * inner;
  std::copy(px, px + y.numel(), y.data());
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    const int64_t off = begin * inner;
    self->backprop = [self, nx, off] {
      nx->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        nx->grad[static_cast<size_t>(off) + i] += self->grad[i];
    };
  }
  return y;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw DimensionError("concat_last: ranks differ for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw DimensionError("concat_last: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const int64_t da = a.dim(a.rank() - 1);
  const int64_t db = b.dim(b.rank() - 1);
  const int64_t rows = a.numel() / da;
  Shape s = a.shape();
  s.back() = da + db;
  Tensor y = op_out(std::move(s), {a, b});
  double* py = y.data();
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(a.data() + r * da, a.data() + (r + 1) * da, py + r * (da + db));
    std::copy(b.data() + r * db, b.data() + (r + 1) * db, py + r * (da + db) + da);
  }
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    self->backprop = [self, na, nb, rows, da, db] {
      const double* dy = self->grad.data();
      if (na->requires_grad) {
        na->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < da; ++i)
            na->grad[static_cast<size_t>(r * da + i)] += dy[r * (da + db) + i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < db; ++i)
            nb->grad[static_cast<size_t>(r * db + i)] += dy[r * (da + db) + da + i];
      }
    };
  }
  return y;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty input");
  const int64_t d = rows[0].numel();
  for (const Tensor& t : rows)
    if (t.rank() != 1 || t.numel() != d)
      throw DimensionError("stack_rows: all rows must be vectors of length " +
                           std::to_string(d) + ", got " + shape_str(t.shape()));
  const int64_t n = static_cast<int64_t>(rows.size());
  std::vector<Tensor> parents(rows.begin(), rows.end());

  auto node = std::make_shared<Node>();
  node->shape = {n, d};
  node->value.resize(static_cast<size_t>(n * d));
  bool rg = false;
  if (grad_enabled())
    for (const Tensor& t : parents)
      if (t.requires_grad()) rg = true;
  node->requires_grad = rg;
  Tensor y(node);
  for (int64_t i = 0; i < n; ++i)
    std::copy(parents[static_cast<size_t>(i)].data(),
              parents[static_cast<size_t>(i)].data() + d, y.data() + i * d);
  if (rg) {
    node->ensure_grad();
    for (const Tensor& t : parents) node->parents.push_back(t.node());
    Node* self = node.get();
    self->backprop = [self, d] {
      for (size_t i = 0; i < self->parents.size(); ++i) {
        Node* p = self->parents[i].get();
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (int64_t j = 0; j < d; ++j)
          p->grad[static_cast<size_t>(j)] += self->grad[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
      }
    };
  }
  return y;
}

Tensor row_range_mean(const Tensor& x, int64_t r0, int64_t r1) {
  if (x.rank() != 2 || r0 < 0 || r0 >= r1 || r1 > x.dim(0))
    throw DimensionError("row_range_mean: rows [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") invalid for " + shape_str(x.shape()));
  const int64_t d = x.dim(1);
  const double inv = 1.0 / static_cast<double>(r1 - r0);
  Tensor y = op_out({d}, {x});
  double* py = y.data();
  const double* px = x.data();
  for (int64_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int64_t r = r0; r < r1; ++r) acc += px[r * d + j];
    py[j] = acc * inv;
  }
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, r0, r1, d, inv] {
      nx->ensure_grad();
      for (int64_t r = r0; r < r1; ++r)
        for (int64_t j = 0; j < d; ++j)
          nx->grad[static_cast<size_t>(r * d + j)] += inv * self->grad[static_cast<size_t>(j)];
    };
  }
  return y;
}

Tensor spatial_mean(const Tensor& x) {
  if (x.rank() != 4)
    throw DimensionError("spatial_mean: expected [c,t,h,w], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), t = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  Tensor y = op_out({c, t}, {x});
  const double* px = x.data();
  double* py = y.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ts = 0; ts < t; ++ts) {
      double acc = 0.0;
      const double* base = px + (ch * t + ts) * hw;
      for (int64_t i = 0; i < hw; ++i) acc += base[i];
      py[ch * t + ts] = acc * inv;
    }
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, c, t, hw, inv] {
      nx->ensure_grad();
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t ts = 0; ts < t; ++ts) {
          const double g = inv * self->grad[static_cast<size_t>(ch * t + ts)];
          double* base = nx->grad.data() + (ch * t + ts) * hw;
          for (int64_t i = 0; i < hw; ++i) base[i] += g;
        }
    };
  }
  return y;
}

namespace {
Tensor reduce_all(const Tensor& x, double coeff) {
  Tensor y = op_out({1}, {x});
  const double* px = x.data();
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  y.data()[0] = acc * coeff;
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, coeff] {
      nx->ensure_grad();
      const double g = coeff * self->grad[0];
      for (double& v : nx->grad) v += g;
    };
  }
  return y;
}
}  // namespace

Tensor sum_all(const Tensor& x) { return reduce_all(x, 1.0); }
Tensor mean_all(const Tensor& x) { return reduce_all(x, 1.0 / static_cast<double>(x.numel())); }

Tensor log_t(const Tensor& x) {
  Tensor y = op_out(x.shape(), {x});
  const double* px = x.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] = std::log(px[i]);
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx] {
      nx->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        nx->grad[i] += self->grad[i] / nx->value[i];
    };
  }
  return y;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor y = op_out(x.shape(), {x});
  const double* px = x.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i)
    py[i] = px[i] < lo ? lo : (px[i] > hi ? hi : px[i]);
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx, lo, hi] {
      nx->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        const double v = nx->value[i];
        if (v > lo && v < hi) nx->grad[i] += self->grad[i];
      }
    };
  }
  return y;
}

Tensor smooth_l1(const Tensor& x) {
  Tensor y = op_out(x.shape(), {x});
  const double* px = x.data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double a = std::abs(px[i]);
    py[i] = a < 1.0 ? 0.5 * px[i] * px[i] : a - 0.5;
  }
  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nx = x.node().get();
    self->backprop = [self, nx] {
      nx->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        const double v = nx->value[i];
        nx->grad[i] += self->grad[i] * (std::abs(v) < 1.0 ? v : (v > 0 ? 1.0 : -1.0));
      }
    };
  }
  return y;
}

Tensor embedding_mean(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw DimensionError("embedding_mean: table must be [vocab, d], got " +
                         shape_str(table.shape()));
  if (ids.empty()) throw InputError("embedding_mean: empty token sequence");
  const int64_t vocab = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw InputError("embedding_mean: token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
  const double inv = 1.0 / static_cast<double>(ids.size());
  Tensor y = op_out({d}, {table});
  double* py = y.data();
  const double* pt = table.data();
  for (int id : ids)
    for (int64_t j = 0; j < d; ++j) py[j] += pt[id * d + j];
  for (int64_t j = 0; j < d; ++j) py[j] *= inv;

  if (y.requires_grad()) {
    Node* self = y.node().get();
    Node* nt = table.node().get();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    self->backprop = [self, nt, ids_copy, d, inv] {
      nt->ensure_grad();
      for (int id : *ids_copy)
        for (int64_t j = 0; j < d; ++j)
          nt->grad[static_cast<size_t>(id * d + j)] += inv * self->grad[static_cast<size_t>(j)];
    };
  }
  return y;
}

}  // namespace tsg
