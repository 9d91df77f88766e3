#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tsg/losses.hpp"
#include "tsg/metrics.hpp"

using namespace tsg;
using gradcheck::random_tensor;

namespace {

// Direct-summation oracles, independent of the autodiff path.

double oracle_bce(const std::vector<double>& p, const std::vector<double>& g) {
  const double n = static_cast<double>(p.size());
  double npos = 0;
  for (double v : g) npos += v > 0.5 ? 1 : 0;
  const double nneg = n - npos;
  const double apos = npos > 0 && nneg > 0 ? n / (2 * npos) : 1.0;
  const double aneg = npos > 0 && nneg > 0 ? n / (2 * nneg) : 1.0;
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    double pc = std::min(std::max(p[i], 1e-7), 1 - 1e-7);
    acc += apos * g[i] * std::log(pc) + aneg * (1 - g[i]) * std::log(1 - pc);
  }
  return -acc / n;
}

double oracle_boundary(const std::vector<double>& sp, const std::vector<double>& ep,
                       const std::vector<double>& sl, const std::vector<double>& el) {
  return oracle_bce(sp, sl) + oracle_bce(ep, el);
}

double oracle_iou(const std::vector<double>& score, const std::vector<double>& target,
                  const std::vector<double>& cls) {
  double mse = 0;
  for (size_t i = 0; i < score.size(); ++i)
    mse += (score[i] - target[i]) * (score[i] - target[i]);
  mse /= static_cast<double>(score.size());
  return oracle_bce(score, cls) + mse;
}

double oracle_offset(const std::vector<double>& off, const std::vector<double>& target,
                     const std::vector<double>& cls) {
  double acc = 0;
  double npos = 0;
  for (size_t i = 0; i < cls.size(); ++i) {
    if (cls[i] < 0.5) continue;
    npos += 1;
    for (int k = 0; k < 4; ++k) {
      double d = off[i * 4 + static_cast<size_t>(k)] - target[i * 4 + static_cast<size_t>(k)];
      acc += std::abs(d) < 1 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
  }
  return npos > 0 ? acc / (4 * npos) : 0.0;
}

std::vector<double> rand_probs(Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(0.02, 0.98);
  return v;
}

std::vector<double> rand_labels(Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return v;
}

}  // namespace

TEST_CASE("balanced BCE reduces to ln 2 at p=0.5 with balanced labels") {
  const int T = 8;
  std::vector<double> p(T, 0.5);
  std::vector<double> labels(T, 0.0);
  for (int i = 0; i < T / 2; ++i) labels[static_cast<size_t>(i)] = 1.0;
  Tensor sp = Tensor::from({T}, std::vector<double>(p));
  Tensor ep = Tensor::from({T}, std::vector<double>(p));
  double loss = boundary_loss(sp, ep, labels, labels).item();
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("near-perfect predictions drive the boundary loss below 1e-5") {
  const int T = 16;
  std::vector<double> labels(T, 0.0);
  labels[3] = labels[4] = 1.0;
  std::vector<double> p(T);
  for (int i = 0; i < T; ++i) p[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] > 0.5 ? 1.0 : 0.0;
  Tensor sp = Tensor::from({T}, std::vector<double>(p));
  Tensor ep = Tensor::from({T}, std::vector<double>(p));
  CHECK(boundary_loss(sp, ep, labels, labels).item() < 1e-5);
}

TEST_CASE("boundary loss matches the direct-summation oracle on 50 random inputs") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    size_t T = 4 + rng.range(28);
    auto sp = rand_probs(rng, T);
    auto ep = rand_probs(rng, T);
    auto sl = rand_labels(rng, T);
    auto el = rand_labels(rng, T);
    double got = boundary_loss(Tensor::from({static_cast<int64_t>(T)}, std::vector<double>(sp)),
                               Tensor::from({static_cast<int64_t>(T)}, std::vector<double>(ep)),
                               sl, el)
                     .item();
    CHECK(std::abs(got - oracle_boundary(sp, ep, sl, el)) < 1e-12);
  }
}

TEST_CASE("vanished label class drops its coefficient and records a warning") {
  const int T = 6;
  std::vector<double> none(T, 0.0);
  std::vector<double> p(T, 0.25);
  WarningLog wl;
  double got = boundary_loss(Tensor::from({T}, std::vector<double>(p)),
                             Tensor::from({T}, std::vector<double>(p)), none, none, &wl)
                   .item();
  CHECK(!wl.empty());
  // unweighted BCE with all-negative labels
  double expect = -2.0 * std::log(0.75);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("iou loss forced values and oracle equality") {
  std::vector<double> score(4, 0.5);
  std::vector<double> target(4, 0.5);
  std::vector<double> cls{1, 1, 0, 0};
  double got = iou_loss(Tensor::from({4}, std::vector<double>(score)), target, cls).item();
  CHECK(got == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // regression term is zero

  // scores saturate the class labels and match the target exactly
  std::vector<double> sat{1.0, 1.0, 0.0, 0.0};
  double sat_loss = iou_loss(Tensor::from({4}, std::vector<double>(sat)), sat, cls).item();
  CHECK(sat_loss < 1e-5);

  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    size_t lv = 3 + rng.range(20);
    auto s = rand_probs(rng, lv);
    auto t = rand_probs(rng, lv);
    auto c = rand_labels(rng, lv);
    double a = iou_loss(Tensor::from({static_cast<int64_t>(lv)}, std::vector<double>(s)), t, c).item();
    CHECK(std::abs(a - oracle_iou(s, t, c)) < 1e-12);
  }
}

TEST_CASE("offset loss forced values, empty positives, oracle equality") {
  std::vector<double> cls{1, 0};
  std::vector<double> target(8, 0.0);
  Tensor half = Tensor::from({2, 4}, {0.5, 0.5, 0.5, 0.5, 9, 9, 9, 9});
  CHECK(offset_loss(half, target, cls).item() == doctest::Approx(0.125).epsilon(1e-12));
  Tensor two = Tensor::from({2, 4}, {2, 2, 2, 2, 9, 9, 9, 9});
  CHECK(offset_loss(two, target, cls).item() == doctest::Approx(1.5).epsilon(1e-12));

  std::vector<double> no_pos{0, 0};
  CHECK(offset_loss(two, target, no_pos).item() == 0.0);

  Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    size_t lv = 2 + rng.range(12);
    std::vector<double> off(lv * 4), tgt(lv * 4);
    for (auto& x : off) x = rng.uniform(-3, 3);
    for (auto& x : tgt) x = rng.uniform(-3, 3);
    auto c = rand_labels(rng, lv);
    double a = offset_loss(Tensor::from({static_cast<int64_t>(lv), 4}, std::vector<double>(off)),
                           tgt, c)
                   .item();
    CHECK(std::abs(a - oracle_offset(off, tgt, c)) < 1e-12);
  }
}

TEST_CASE("total loss is the exact sum of its three terms and non-negative") {
  Rng rng(51);
  const int T = 12;
  const int lv = 7;
  HeadOutput out;
  out.start_prob = Tensor::from({T}, rand_probs(rng, T));
  out.end_prob = Tensor::from({T}, rand_probs(rng, T));
  out.iou_score = Tensor::from({lv}, rand_probs(rng, lv));
  std::vector<double> off(lv * 4);
  for (auto& x : off) x = rng.uniform(-2, 2);
  out.offsets = Tensor::from({lv, 4}, std::vector<double>(off));

  SupervisionTargets t;
  t.start_label = rand_labels(rng, T);
  t.end_label = rand_labels(rng, T);
  t.iou_target = rand_probs(rng, lv);
  t.iou_class = rand_labels(rng, lv);
  t.offset_target.assign(lv * 4, 0.1);

  double lb = boundary_loss(out.start_prob, out.end_prob, t.start_label, t.end_label).item();
  double li = iou_loss(out.iou_score, t.iou_target, t.iou_class).item();
  double lo = offset_loss(out.offsets, t.offset_target, t.iou_class).item();
  double lt = total_loss(out, t).item();
  CHECK(std::abs(lt - (lb + li + lo)) < 1e-12);
  CHECK(lt >= 0.0);
}

TEST_CASE("loss is invariant under a consistent permutation of anchors") {
  Rng rng(53);
  const int lv = 9;
  auto score = rand_probs(rng, lv);
  auto target = rand_probs(rng, lv);
  auto cls = rand_labels(rng, lv);
  std::vector<double> off(lv * 4);
  for (auto& x : off) x = rng.uniform(-2, 2);

  std::vector<size_t> perm(lv);
  for (size_t i = 0; i < lv; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> score_p(lv), target_p(lv), cls_p(lv), off_p(lv * 4);
  for (size_t i = 0; i < lv; ++i) {
    score_p[i] = score[perm[i]];
    target_p[i] = target[perm[i]];
    cls_p[i] = cls[perm[i]];
    for (int k = 0; k < 4; ++k) off_p[i * 4 + static_cast<size_t>(k)] = off[perm[i] * 4 + static_cast<size_t>(k)];
  }

  double a = iou_loss(Tensor::from({lv}, std::vector<double>(score)), target, cls).item() +
             offset_loss(Tensor::from({lv, 4}, std::vector<double>(off)), off, cls).item();
  double b = iou_loss(Tensor::from({lv}, std::vector<double>(score_p)), target_p, cls_p).item() +
             offset_loss(Tensor::from({lv, 4}, std::vector<double>(off_p)), off_p, cls_p).item();
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("build_targets: widened boundaries, gt anchor positive, offsets invert") {
  const int64_t T = 32;
  MomentSegment gt{10, 20};
  std::vector<MomentSegment> anchors{{0, 8}, {8, 16}, {12, 20}, {9, 21}, gt};
  SupervisionTargets t = build_targets(gt, anchors, T, 0.7);

  for (int64_t i = 0; i < T; ++i) {
    CHECK(t.start_label[static_cast<size_t>(i)] == ((i >= 9 && i <= 11) ? 1.0 : 0.0));
    CHECK(t.end_label[static_cast<size_t>(i)] == ((i >= 18 && i <= 20) ? 1.0 : 0.0));
  }

  // the appended gt anchor is always positive
  CHECK(t.iou_class.back() == 1.0);
  CHECK(t.iou_target.back() == doctest::Approx(1.0));

  int positives = 0;
  for (size_t i = 0; i < anchors.size(); ++i) {
    CHECK(t.iou_target[i] == doctest::Approx(temporal_iou(anchors[i], gt)).epsilon(1e-12));
    if (t.iou_class[i] > 0.5) {
      ++positives;
      std::array<double, 4> off{t.offset_target[i * 4], t.offset_target[i * 4 + 1],
                                t.offset_target[i * 4 + 2], t.offset_target[i * 4 + 3]};
      MomentSegment refined = refine(anchors[i], off, T);
      CHECK(std::abs(refined.start - gt.start) < 1e-9);
      CHECK(std::abs(refined.end - gt.end) < 1e-9);
    }
  }
  CHECK(positives >= 1);
}
