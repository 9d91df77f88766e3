// Benchmarks the OpenMP kernels against the serial references on the
// tensor shapes the default model actually runs.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <vector>

#include "tsg/kernels.hpp"
#include "tsg/rng.hpp"

using namespace tsg;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> rand_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
  f();  // warm-up
  auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, const char* shape, double serial_ms, double parallel_ms) {
  std::printf("%-22s %-28s %10.3f %10.3f %8.2fx\n", name, shape, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

void bench_conv(Rng& rng, int reps, int64_t ci, int64_t t, int64_t h, int64_t w,
                int64_t co, int64_t sh) {
  kern::Conv3dDims d;
  d.ci = ci; d.ti = t; d.hi = h; d.wi = w;
  d.co = co; d.kt = 3; d.kh = 3; d.kw = 3;
  d.st = 1; d.sh = sh; d.sw = sh;
  d.pt = 1; d.ph = 1; d.pw = 1;
  d.to = (d.ti + 2 * d.pt - d.kt) / d.st + 1;
  d.ho = (d.hi + 2 * d.ph - d.kh) / d.sh + 1;
  d.wo = (d.wi + 2 * d.pw - d.kw) / d.sw + 1;

  auto x = rand_vec(d.ci * d.ti * d.hi * d.wi, rng);
  auto k = rand_vec(d.co * d.ci * 27, rng);
  auto b = rand_vec(d.co, rng);
  std::vector<double> y(static_cast<size_t>(d.co * d.to * d.ho * d.wo));

  char shape[64];
  std::snprintf(shape, sizeof shape, "(%ld,%ld,%ld,%ld)->%ld s%ld", ci, t, h, w, co, sh);
  double ser = time_ms([&] { kern::serial::conv3d_fwd(x.data(), k.data(), b.data(), y.data(), d); }, reps);
  double par = time_ms([&] { kern::conv3d_fwd(x.data(), k.data(), b.data(), y.data(), d); }, reps);
  report("conv3d_fwd", shape, ser, par);

  auto dy = rand_vec(static_cast<int64_t>(y.size()), rng);
  std::vector<double> dx(x.size());
  ser = time_ms([&] { kern::serial::conv3d_bwd_input_acc(dy.data(), k.data(), dx.data(), d); }, reps);
  par = time_ms([&] { kern::conv3d_bwd_input_acc(dy.data(), k.data(), dx.data(), d); }, reps);
  report("conv3d_bwd_input", shape, ser, par);

  std::vector<double> dk(k.size());
  ser = time_ms([&] { kern::serial::conv3d_bwd_kernel_acc(dy.data(), x.data(), dk.data(), d); }, reps);
  par = time_ms([&] { kern::conv3d_bwd_kernel_acc(dy.data(), x.data(), dk.data(), d); }, reps);
  report("conv3d_bwd_kernel", shape, ser, par);
}

void bench_gemm(Rng& rng, int reps, int64_t n, int64_t k, int64_t m) {
  auto a = rand_vec(n * k, rng);
  auto b = rand_vec(m * k, rng);
  auto bias = rand_vec(m, rng);
  std::vector<double> c(static_cast<size_t>(n * m));
  char shape[64];
  std::snprintf(shape, sizeof shape, "%ldx%ld * (%ldx%ld)^T", n, k, m, k);
  double ser = time_ms([&] { kern::serial::gemm_nt(a.data(), b.data(), bias.data(), c.data(), n, k, m); }, reps);
  double par = time_ms([&] { kern::gemm_nt(a.data(), b.data(), bias.data(), c.data(), n, k, m); }, reps);
  report("gemm_nt", shape, ser, par);
}

void bench_dwconv(Rng& rng, int reps, int64_t c, int64_t s, int64_t t, int64_t klen) {
  auto x = rand_vec(c * s * t, rng);
  auto k = rand_vec(c * klen, rng);
  std::vector<double> y(x.size());
  char shape[64];
  std::snprintf(shape, sizeof shape, "(%ld,%ld,%ld) k%ld", c, s, t, klen);
  double ser = time_ms([&] { kern::serial::dwconv1d_fwd(x.data(), k.data(), y.data(), c, s, t, klen); }, reps);
  double par = time_ms([&] { kern::dwconv1d_fwd(x.data(), k.data(), y.data(), c, s, t, klen); }, reps);
  report("dwconv1d_fwd", shape, ser, par);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  int reps = 20;
  app.add_option("--reps", reps, "repetitions per measurement");
  CLI11_PARSE(app, argc, argv);

  Rng rng(2024);
  std::printf("%-22s %-28s %10s %10s %9s\n", "kernel", "shape", "serial ms",
              "openmp ms", "speedup");

  // default backbone block shapes
  bench_conv(rng, reps, 4, 64, 16, 16, 16, 2);
  bench_conv(rng, reps, 16, 64, 8, 8, 32, 2);
  bench_conv(rng, reps, 32, 64, 4, 4, 64, 2);
  bench_conv(rng, reps, 64, 64, 2, 2, 64, 1);

  // adapter / head projections
  bench_gemm(rng, reps, 4096, 64, 16);
  bench_gemm(rng, reps, 256, 64, 16);
  bench_gemm(rng, reps, 64, 128, 64);

  bench_dwconv(rng, reps, 16, 4, 64, 3);
  return 0;
}
