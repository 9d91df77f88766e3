#include "tsg/losses.hpp"

#include <cmath>

#include "tsg/metrics.hpp"
#include "tsg/ops.hpp"

namespace tsg {

namespace {
constexpr double kProbEps = 1e-7;

// -(1/n) * sum[a_pos*g*log(p) + a_neg*(1-g)*log(1-p)] with
// a_pos = n/(2*N+), a_neg = n/(2*N-).
Tensor balanced_bce(const Tensor& prob, const std::vector<double>& labels,
                    WarningLog* wl, const char* what) {
  const int64_t n = static_cast<int64_t>(labels.size());
  if (prob.numel() != n)
    throw DimensionError(std::string(what) + ": probabilities " + shape_str(prob.shape()) +
                         " vs " + std::to_string(n) + " labels");
  int64_t pos = 0;
  for (double g : labels) pos += g > 0.5 ? 1 : 0;
  const int64_t neg = n - pos;

  double a_pos, a_neg;
  if (pos == 0 || neg == 0) {
    warn(wl, std::string(what) + ": a label class vanished (" + std::to_string(pos) +
                 " positives of " + std::to_string(n) + "), using unweighted BCE");
    a_pos = a_neg = 1.0;
  } else {
    a_pos = static_cast<double>(n) / (2.0 * static_cast<double>(pos));
    a_neg = static_cast<double>(n) / (2.0 * static_cast<double>(neg));
  }

  std::vector<double> w_pos(labels.size()), w_neg(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    w_pos[i] = a_pos * labels[i] / static_cast<double>(n);
    w_neg[i] = a_neg * (1.0 - labels[i]) / static_cast<double>(n);
  }
  Tensor p = clamp(prob, kProbEps, 1.0 - kProbEps);
  Tensor pos_term = sum_all(mul(Tensor::from(prob.shape(), std::move(w_pos)), log_t(p)));
  Tensor neg_term = sum_all(mul(Tensor::from(prob.shape(), std::move(w_neg)),
                                log_t(sub(Tensor::full(prob.shape(), 1.0), p))));
  return scale(add(pos_term, neg_term), -1.0);
}
}  // namespace

SupervisionTargets build_targets(const MomentSegment& gt,
                                 const std::vector<MomentSegment>& anchors,
                                 int64_t total_frames, double theta) {
  SupervisionTargets t;
  t.start_label.assign(static_cast<size_t>(total_frames), 0.0);
  t.end_label.assign(static_cast<size_t>(total_frames), 0.0);
  const int64_t s0 = std::lround(gt.start);
  const int64_t e0 = std::lround(gt.end) - 1;  // last frame inside the moment
  for (int64_t dt = -1; dt <= 1; ++dt) {
    if (s0 + dt >= 0 && s0 + dt < total_frames)
      t.start_label[static_cast<size_t>(s0 + dt)] = 1.0;
    if (e0 + dt >= 0 && e0 + dt < total_frames)
      t.end_label[static_cast<size_t>(e0 + dt)] = 1.0;
  }

  t.iou_target.reserve(anchors.size());
  t.iou_class.reserve(anchors.size());
  t.offset_target.assign(anchors.size() * 4, 0.0);
  for (size_t i = 0; i < anchors.size(); ++i) {
    const double iou = temporal_iou(anchors[i], gt);
    t.iou_target.push_back(iou);
    const bool positive = iou >= theta;
    t.iou_class.push_back(positive ? 1.0 : 0.0);
    if (positive) {
      auto off = offsets_between(anchors[i], gt);
      for (int k = 0; k < 4; ++k)
        t.offset_target[i * 4 + static_cast<size_t>(k)] = off[static_cast<size_t>(k)];
    }
  }
  return t;
}

Tensor boundary_loss(const Tensor& start_prob, const Tensor& end_prob,
                     const std::vector<double>& start_label,
                     const std::vector<double>& end_label, WarningLog* wl) {
  return add(balanced_bce(start_prob, start_label, wl, "boundary_loss[start]"),
             balanced_bce(end_prob, end_label, wl, "boundary_loss[end]"));
}

Tensor iou_loss(const Tensor& iou_score, const std::vector<double>& iou_target,
                const std::vector<double>& iou_class, WarningLog* wl) {
  Tensor cls = balanced_bce(iou_score, iou_class, wl, "iou_loss");
  Tensor diff = sub(iou_score, Tensor::from(iou_score.shape(),
                                            std::vector<double>(iou_target)));
  Tensor reg = mean_all(mul(diff, diff));
  return add(cls, reg);
}

Tensor offset_loss(const Tensor& offsets, const std::vector<double>& offset_target,
                   const std::vector<double>& iou_class) {
  const int64_t lv = static_cast<int64_t>(iou_class.size());
  if (offsets.rank() != 2 || offsets.dim(0) != lv || offsets.dim(1) != 4)
    throw DimensionError("offset_loss: offsets " + shape_str(offsets.shape()) + " vs " +
                         std::to_string(lv) + " anchors");
  int64_t pos = 0;
  for (double g : iou_class) pos += g > 0.5 ? 1 : 0;
  if (pos == 0) return Tensor::scalar(0.0);

  Tensor diff = sub(offsets, Tensor::from(offsets.shape(),
                                          std::vector<double>(offset_target)));
  Tensor masked = mul_axis(smooth_l1(diff), Tensor::from({lv}, std::vector<double>(iou_class)), 0);
  return scale(sum_all(masked), 1.0 / (4.0 * static_cast<double>(pos)));
}

Tensor total_loss(const HeadOutput& out, const SupervisionTargets& targets, WarningLog* wl) {
  Tensor lb = boundary_loss(out.start_prob, out.end_prob, targets.start_label,
                            targets.end_label, wl);
  Tensor li = iou_loss(out.iou_score, targets.iou_target, targets.iou_class, wl);
  Tensor lo = offset_loss(out.offsets, targets.offset_target, targets.iou_class);
  return add(add(lb, li), lo);
}

}  // namespace tsg
