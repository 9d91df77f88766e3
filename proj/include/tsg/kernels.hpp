#pragma once

#include <cstdint>

// Dense kernels backing the tensor ops. The parallel versions in
// tsg::kern partition work over independent output elements (gather
// style, no shared accumulators), so every output element is summed in
// the same order as the serial reference regardless of thread count and
// the two implementations agree bit for bit. tsg::kern::serial keeps the
// plain-loop references for testing and benchmarking.

namespace tsg::kern {

struct Conv3dDims {
  int64_t ci, ti, hi, wi;      // input
  int64_t co, kt, kh, kw;      // kernel
  int64_t st, sh, sw;          // stride
  int64_t pt, ph, pw;          // zero padding per side
  int64_t to, ho, wo;          // output (precomputed by caller)
};

// C[n,m] = A[n,k] * B[m,k]^T + bias[m]  (bias may be null)
void gemm_nt(const double* a, const double* b, const double* bias, double* c,
             int64_t n, int64_t k, int64_t m);
// C[n,m] += A[n,k] * B[k,m]
void gemm_nn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m);
// C[k,m] += A[n,k]^T * B[n,m]
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m);

void conv3d_fwd(const double* x, const double* w, const double* bias,
                double* y, const Conv3dDims& d);
void conv3d_bwd_input_acc(const double* dy, const double* w, double* dx,
                          const Conv3dDims& d);
void conv3d_bwd_kernel_acc(const double* dy, const double* x, double* dw,
                           const Conv3dDims& d);

// Depthwise 1-D convolution along the last axis of x[c, s, t] with a
// per-channel kernel[c, klen] shared across the s axis. klen odd,
// zero-padded to keep length t.
void dwconv1d_fwd(const double* x, const double* k, double* y, int64_t c,
                  int64_t s, int64_t t, int64_t klen);
void dwconv1d_bwd_input_acc(const double* dy, const double* k, double* dx,
                            int64_t c, int64_t s, int64_t t, int64_t klen);
void dwconv1d_bwd_kernel_acc(const double* dy, const double* x, double* dk,
                             int64_t c, int64_t s, int64_t t, int64_t klen);

namespace serial {

void gemm_nt(const double* a, const double* b, const double* bias, double* c,
             int64_t n, int64_t k, int64_t m);
void gemm_nn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m);
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t n,
                 int64_t k, int64_t m);
void conv3d_fwd(const double* x, const double* w, const double* bias,
                double* y, const Conv3dDims& d);
void conv3d_bwd_input_acc(const double* dy, const double* w, double* dx,
                          const Conv3dDims& d);
void conv3d_bwd_kernel_acc(const double* dy, const double* x, double* dw,
                           const Conv3dDims& d);
void dwconv1d_fwd(const double* x, const double* k, double* y, int64_t c,
                  int64_t s, int64_t t, int64_t klen);
void dwconv1d_bwd_input_acc(const double* dy, const double* k, double* dx,
                            int64_t c, int64_t s, int64_t t, int64_t klen);
void dwconv1d_bwd_kernel_acc(const double* dy, const double* x, double* dk,
                             int64_t c, int64_t s, int64_t t, int64_t klen);

}  // namespace serial

}  // namespace tsg::kern
