#include "tsg/kernels.hpp"

#include <algorithm>

// Two implementations per kernel. tsg::kern holds the OpenMP versions:
// per-axis tap/output ranges are precomputed so the hot loops are branch-
// and division-free, and work is partitioned over independent output
// elements (gather style, no shared accumulators). tsg::kern::serial keeps
// naive reference loops. Both accumulate every output element in the same
// order, so results agree bit for bit at any thread count.

namespace tsg::kern {

namespace serial {

void gemm_nt(const double* a, const double* b, const double* bias, double* c,
             int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < m; ++j) {
      double acc = bias ? bias[j] : 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * m + j] = acc;
    }
  }
}

void gemm_nn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j)
      for (int64_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
}

void gemm_tn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m) {
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < m; ++j)
      for (int64_t p = 0; p < n; ++p) c[i * m + j] += a[p * k + i] * b[p * m + j];
}

void conv3d_fwd(const double* x, const double* w, const double* bias, double* y,
                const Conv3dDims& d) {
  for (int64_t co = 0; co < d.co; ++co)
    for (int64_t ot = 0; ot < d.to; ++ot)
      for (int64_t oh = 0; oh < d.ho; ++oh)
        for (int64_t ow = 0; ow < d.wo; ++ow) {
          double acc = bias ? bias[co] : 0.0;
          for (int64_t ci = 0; ci < d.ci; ++ci)
            for (int64_t kt = 0; kt < d.kt; ++kt) {
              const int64_t it = ot * d.st - d.pt + kt;
              if (it < 0 || it >= d.ti) continue;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t ih = oh * d.sh - d.ph + kh;
                if (ih < 0 || ih >= d.hi) continue;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const int64_t iw = ow * d.sw - d.pw + kw;
                  if (iw < 0 || iw >= d.wi) continue;
                  acc += x[((ci * d.ti + it) * d.hi + ih) * d.wi + iw] *
                         w[(((co * d.ci + ci) * d.kt + kt) * d.kh + kh) * d.kw + kw];
                }
              }
            }
          y[((co * d.to + ot) * d.ho + oh) * d.wo + ow] = acc;
        }
}

void conv3d_bwd_input_acc(const double* dy, const double* w, double* dx,
                          const Conv3dDims& d) {
  for (int64_t ci = 0; ci < d.ci; ++ci)
    for (int64_t it = 0; it < d.ti; ++it)
      for (int64_t ih = 0; ih < d.hi; ++ih)
        for (int64_t iw = 0; iw < d.wi; ++iw) {
          double acc = 0.0;
          for (int64_t co = 0; co < d.co; ++co)
            for (int64_t kt = 0; kt < d.kt; ++kt) {
              const int64_t num_t = it + d.pt - kt;
              if (num_t < 0 || num_t % d.st) continue;
              const int64_t ot = num_t / d.st;
              if (ot >= d.to) continue;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t num_h = ih + d.ph - kh;
                if (num_h < 0 || num_h % d.sh) continue;
                const int64_t oh = num_h / d.sh;
                if (oh >= d.ho) continue;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const int64_t num_w = iw + d.pw - kw;
                  if (num_w < 0 || num_w % d.sw) continue;
                  const int64_t ow = num_w / d.sw;
                  if (ow >= d.wo) continue;
                  acc += dy[((co * d.to + ot) * d.ho + oh) * d.wo + ow] *
                         w[(((co * d.ci + ci) * d.kt + kt) * d.kh + kh) * d.kw + kw];
                }
              }
            }
          dx[((ci * d.ti + it) * d.hi + ih) * d.wi + iw] += acc;
        }
}

void conv3d_bwd_kernel_acc(const double* dy, const double* x, double* dw,
                           const Conv3dDims& d) {
  for (int64_t co = 0; co < d.co; ++co)
    for (int64_t ci = 0; ci < d.ci; ++ci)
      for (int64_t kt = 0; kt < d.kt; ++kt)
        for (int64_t kh = 0; kh < d.kh; ++kh)
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            double acc = 0.0;
            for (int64_t ot = 0; ot < d.to; ++ot) {
              const int64_t it = ot * d.st - d.pt + kt;
              if (it < 0 || it >= d.ti) continue;
              for (int64_t oh = 0; oh < d.ho; ++oh) {
                const int64_t ih = oh * d.sh - d.ph + kh;
                if (ih < 0 || ih >= d.hi) continue;
                for (int64_t ow = 0; ow < d.wo; ++ow) {
                  const int64_t iw = ow * d.sw - d.pw + kw;
                  if (iw < 0 || iw >= d.wi) continue;
                  acc += dy[((co * d.to + ot) * d.ho + oh) * d.wo + ow] *
                         x[((ci * d.ti + it) * d.hi + ih) * d.wi + iw];
                }
              }
            }
            dw[(((co * d.ci + ci) * d.kt + kt) * d.kh + kh) * d.kw + kw] += acc;
          }
}

void dwconv1d_fwd(const double* x, const double* k, double* y, int64_t c,
                  int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t sp = 0; sp < s; ++sp)
      for (int64_t i = 0; i < t; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < klen; ++j) {
          const int64_t p = i - pad + j;
          if (p < 0 || p >= t) continue;
          acc += x[(ch * s + sp) * t + p] * k[ch * klen + j];
        }
        y[(ch * s + sp) * t + i] = acc;
      }
}

void dwconv1d_bwd_input_acc(const double* dy, const double* k, double* dx,
                            int64_t c, int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t sp = 0; sp < s; ++sp)
      for (int64_t p = 0; p < t; ++p) {
        double acc = 0.0;
        for (int64_t j = 0; j < klen; ++j) {
          const int64_t i = p + pad - j;
          if (i < 0 || i >= t) continue;
          acc += dy[(ch * s + sp) * t + i] * k[ch * klen + j];
        }
        dx[(ch * s + sp) * t + p] += acc;
      }
}

void dwconv1d_bwd_kernel_acc(const double* dy, const double* x, double* dk,
                             int64_t c, int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t j = 0; j < klen; ++j) {
      double acc = 0.0;
      for (int64_t sp = 0; sp < s; ++sp)
        for (int64_t i = 0; i < t; ++i) {
          const int64_t p = i - pad + j;
          if (p < 0 || p >= t) continue;
          acc += dy[(ch * s + sp) * t + i] * x[(ch * s + sp) * t + p];
        }
      dk[ch * klen + j] += acc;
    }
}

}  // namespace serial

namespace {

struct Range {
  int64_t lo, hi;  // half-open
};

// taps k with 0 <= o*s - p + k < in, for a fixed output position o
inline Range tap_range(int64_t o, int64_t s, int64_t p, int64_t klen, int64_t in) {
  const int64_t base = o * s - p;
  return {std::max<int64_t>(0, -base), std::min(klen, in - base)};
}

// outputs o with 0 <= o*s - p + k < in and 0 <= o < out, for a fixed tap k
inline Range out_range(int64_t k, int64_t s, int64_t p, int64_t in, int64_t out) {
  const int64_t lo = p - k <= 0 ? 0 : (p - k + s - 1) / s;
  const int64_t hi = std::min(out, (in - 1 + p - k) / s + 1);
  return {lo, std::max(lo, hi)};
}

// outputs o with k = i + p - o*s landing on a valid tap, o in [0, out)
inline Range grad_range(int64_t i, int64_t s, int64_t p, int64_t klen, int64_t out) {
  const int64_t num = i + p;  // k = num - o*s
  const int64_t lo = num - klen + 1 <= 0 ? 0 : (num - klen + 1 + s - 1) / s;
  const int64_t hi = std::min(out, num / s + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

void gemm_nt(const double* a, const double* b, const double* bias, double* c,
             int64_t n, int64_t k, int64_t m) {
#pragma omp parallel for collapse(2) if (n * m * k > 65536)
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < m; ++j) {
      double acc = bias ? bias[j] : 0.0;
      const double* ar = a + i * k;
      const double* br = b + j * k;
      for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      c[i * m + j] = acc;
    }
  }
}

void gemm_nn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m) {
#pragma omp parallel for if (n * m * k > 65536)
  for (int64_t i = 0; i < n; ++i) {
    double* c_row = c + i * m;
    const double* a_row = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      const double* b_row = b + p * m;
      for (int64_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m) {
#pragma omp parallel for if (n * m * k > 65536)
  for (int64_t i = 0; i < k; ++i) {
    double* c_row = c + i * m;
    for (int64_t p = 0; p < n; ++p) {
      const double av = a[p * k + i];
      const double* b_row = b + p * m;
      for (int64_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
    }
  }
}

void conv3d_fwd(const double* x, const double* w, const double* bias, double* y,
                const Conv3dDims& d) {
  // the temporal axis is the long one here, so it runs innermost; per
  // output element the taps still accumulate in (ci, kt, kh, kw) order
#pragma omp parallel for collapse(2)
  for (int64_t co = 0; co < d.co; ++co) {
    for (int64_t oh = 0; oh < d.ho; ++oh) {
      const Range rh = tap_range(oh, d.sh, d.ph, d.kh, d.hi);
      const double* w_co = w + co * d.ci * d.kt * d.kh * d.kw;
      for (int64_t ow = 0; ow < d.wo; ++ow) {
        const Range rw = tap_range(ow, d.sw, d.pw, d.kw, d.wi);
        double* y_col = y + (co * d.to * d.ho + oh) * d.wo + ow;
        const int64_t y_step = d.ho * d.wo;
        const double b = bias ? bias[co] : 0.0;
        for (int64_t ot = 0; ot < d.to; ++ot) y_col[ot * y_step] = b;
        for (int64_t ci = 0; ci < d.ci; ++ci) {
          const double* w_ci = w_co + ci * d.kt * d.kh * d.kw;
          for (int64_t kt = 0; kt < d.kt; ++kt) {
            const Range rt = out_range(kt, d.st, d.pt, d.ti, d.to);
            for (int64_t kh = rh.lo; kh < rh.hi; ++kh) {
              const int64_t ih = oh * d.sh - d.ph + kh;
              for (int64_t kw = rw.lo; kw < rw.hi; ++kw) {
                const int64_t iw = ow * d.sw - d.pw + kw;
                const double wv = w_ci[(kt * d.kh + kh) * d.kw + kw];
                // x index for ot: it = ot*st - pt + kt
                const double* x_col =
                    x + ((ci * d.ti + (rt.lo * d.st - d.pt + kt)) * d.hi + ih) * d.wi + iw;
                const int64_t x_step = d.st * d.hi * d.wi;
                double* yp = y_col + rt.lo * y_step;
                for (int64_t i = 0; i < rt.hi - rt.lo; ++i)
                  yp[i * y_step] += wv * x_col[i * x_step];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_bwd_input_acc(const double* dy, const double* w, double* dx,
                          const Conv3dDims& d) {
  // per input element the contributions land in the serial order
  // (co, kt, kh, kw ascending); the temporal axis runs innermost
#pragma omp parallel for collapse(2)
  for (int64_t ci = 0; ci < d.ci; ++ci) {
    for (int64_t ih = 0; ih < d.hi; ++ih) {
      for (int64_t iw = 0; iw < d.wi; ++iw) {
        double* dx_col = dx + ((ci * d.ti) * d.hi + ih) * d.wi + iw;
        const int64_t dx_step = d.hi * d.wi;
        for (int64_t co = 0; co < d.co; ++co) {
          const double* dy_c = dy + co * d.to * d.ho * d.wo;
          const double* w_c = w + (co * d.ci + ci) * d.kt * d.kh * d.kw;
          for (int64_t kt = 0; kt < d.kt; ++kt) {
            const Range rt = out_range(kt, d.st, d.pt, d.ti, d.to);
            if (rt.lo >= rt.hi) continue;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t num_h = ih + d.ph - kh;
              if (num_h < 0 || num_h % d.sh) continue;
              const int64_t oh = num_h / d.sh;
              if (oh >= d.ho) continue;
              for (int64_t kw = 0; kw < d.kw; ++kw) {
                const int64_t num_w = iw + d.pw - kw;
                if (num_w < 0 || num_w % d.sw) continue;
                const int64_t ow = num_w / d.sw;
                if (ow >= d.wo) continue;
                const double wv = w_c[(kt * d.kh + kh) * d.kw + kw];
                const double* dy_col = dy_c + (rt.lo * d.ho + oh) * d.wo + ow;
                const int64_t dy_step = d.ho * d.wo;
                // it = ot*st - pt + kt walks with ot
                double* dxp = dx_col + (rt.lo * d.st - d.pt + kt) * dx_step;
                const int64_t dxp_step = d.st * dx_step;
                for (int64_t i = 0; i < rt.hi - rt.lo; ++i)
                  dxp[i * dxp_step] += wv * dy_col[i * dy_step];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_bwd_kernel_acc(const double* dy, const double* x, double* dw,
                           const Conv3dDims& d) {
#pragma omp parallel for collapse(2)
  for (int64_t co = 0; co < d.co; ++co) {
    for (int64_t ci = 0; ci < d.ci; ++ci) {
      for (int64_t kt = 0; kt < d.kt; ++kt) {
        const Range rt = out_range(kt, d.st, d.pt, d.ti, d.to);
        for (int64_t kh = 0; kh < d.kh; ++kh) {
          const Range rh = out_range(kh, d.sh, d.ph, d.hi, d.ho);
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            const Range rw = out_range(kw, d.sw, d.pw, d.wi, d.wo);
            const int64_t off = kw - d.pw;
            double acc = 0.0;
            for (int64_t ot = rt.lo; ot < rt.hi; ++ot) {
              const int64_t it = ot * d.st - d.pt + kt;
              for (int64_t oh = rh.lo; oh < rh.hi; ++oh) {
                const int64_t ih = oh * d.sh - d.ph + kh;
                const double* dy_row = dy + ((co * d.to + ot) * d.ho + oh) * d.wo;
                const double* x_row = x + ((ci * d.ti + it) * d.hi + ih) * d.wi;
                for (int64_t ow = rw.lo; ow < rw.hi; ++ow)
                  acc += dy_row[ow] * x_row[ow * d.sw + off];
              }
            }
            dw[(((co * d.ci + ci) * d.kt + kt) * d.kh + kh) * d.kw + kw] += acc;
          }
        }
      }
    }
  }
}

void dwconv1d_fwd(const double* x, const double* k, double* y, int64_t c,
                  int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
#pragma omp parallel for collapse(2) if (c * s * t > 16384)
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t sp = 0; sp < s; ++sp) {
      const double* row = x + (ch * s + sp) * t;
      double* out = y + (ch * s + sp) * t;
      for (int64_t i = 0; i < t; ++i) {
        const int64_t j_lo = std::max<int64_t>(0, pad - i);
        const int64_t j_hi = std::min(klen, t + pad - i);
        double acc = 0.0;
        for (int64_t j = j_lo; j < j_hi; ++j) acc += row[i - pad + j] * k[ch * klen + j];
        out[i] = acc;
      }
    }
  }
}

void dwconv1d_bwd_input_acc(const double* dy, const double* k, double* dx,
                            int64_t c, int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
#pragma omp parallel for collapse(2) if (c * s * t > 16384)
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t sp = 0; sp < s; ++sp) {
      const double* grow = dy + (ch * s + sp) * t;
      double* drow = dx + (ch * s + sp) * t;
      for (int64_t p = 0; p < t; ++p) {
        const int64_t j_lo = std::max<int64_t>(0, p + pad - t + 1);
        const int64_t j_hi = std::min(klen, p + pad + 1);
        double acc = 0.0;
        for (int64_t j = j_lo; j < j_hi; ++j) acc += grow[p + pad - j] * k[ch * klen + j];
        drow[p] += acc;
      }
    }
  }
}

void dwconv1d_bwd_kernel_acc(const double* dy, const double* x, double* dk,
                             int64_t c, int64_t s, int64_t t, int64_t klen) {
  const int64_t pad = (klen - 1) / 2;
#pragma omp parallel for if (c > 1)
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t j = 0; j < klen; ++j) {
      const int64_t i_lo = std::max<int64_t>(0, pad - j);
      const int64_t i_hi = std::min(t, t + pad - j);
      double acc = 0.0;
      for (int64_t sp = 0; sp < s; ++sp) {
        const double* row = x + (ch * s + sp) * t;
        const double* grow = dy + (ch * s + sp) * t;
        for (int64_t i = i_lo; i < i_hi; ++i) acc += grow[i] * row[i - pad + j];
      }
      dk[ch * klen + j] += acc;
    }
  }
}

}  // namespace tsg::kern
