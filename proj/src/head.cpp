#include "tsg/head.hpp"

#include <algorithm>
#include <cmath>

#include "tsg/errors.hpp"
#include "tsg/ops.hpp"

namespace tsg {

AnchorSet AnchorSet::build(int64_t total_frames, const std::vector<int>& scales) {
  if (scales.empty()) throw ConfigError("anchor scales must be non-empty");
  int smallest = scales[0];
  for (int s : scales) {
    if (s <= 0) throw ConfigError("anchor scales must be positive");
    smallest = std::min(smallest, s);
  }
  if (total_frames < smallest)
    throw InputError("video of " + std::to_string(total_frames) +
                     " frames is shorter than the smallest anchor scale " +
                     std::to_string(smallest));
  AnchorSet set;
  for (int s : scales) {
    const int64_t stride = std::max<int64_t>(1, s / 2);
    for (int64_t start = 0; start < total_frames; start += stride) {
      MomentSegment a{static_cast<double>(start),
                      static_cast<double>(std::min<int64_t>(start + s, total_frames))};
      set.anchors.push_back(a);
    }
  }
  return set;
}

namespace {

inline double sigmoid_d(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One fused recurrence node per direction: the input projection is a
// plain matmul outside, the recurrence runs here with analytic BPTT.
// Saves the per-step gate activations and cell states for the backward
// pass (layout per processed step: i, f, g, o, c).
Tensor lstm_dir(const Tensor& xg, const Tensor& w_hh, const Tensor& b_hh,
                bool reverse) {
  const int64_t steps = xg.dim(0);
  const int64_t h4 = xg.dim(1);
  const int64_t hid = w_hh.dim(1);
  if (h4 != 4 * hid || w_hh.dim(0) != h4 || b_hh.numel() != h4)
    throw DimensionError("lstm: gate projection " + shape_str(xg.shape()) +
                         " vs recurrent weights " + shape_str(w_hh.shape()));

  auto node = std::make_shared<Node>();
  node->shape = {steps, hid};
  node->value.resize(static_cast<size_t>(steps * hid));
  bool rg = grad_enabled() &&
            (xg.requires_grad() || w_hh.requires_grad() || b_hh.requires_grad());
  node->requires_grad = rg;

  auto saved = std::make_shared<std::vector<double>>(static_cast<size_t>(steps * 5 * hid));
  std::vector<double> h(static_cast<size_t>(hid), 0.0);
  std::vector<double> c(static_cast<size_t>(hid), 0.0);
  std::vector<double> gates(static_cast<size_t>(h4));
  const double* whh = w_hh.data();
  const double* bhh = b_hh.data();
  for (int64_t i = 0; i < steps; ++i) {
    const int64_t t = reverse ? steps - 1 - i : i;
    const double* xrow = xg.data() + t * h4;
    for (int64_t j = 0; j < h4; ++j) {
      double acc = xrow[j] + bhh[j];
      const double* wrow = whh + j * hid;
      for (int64_t k = 0; k < hid; ++k) acc += wrow[k] * h[static_cast<size_t>(k)];
      gates[static_cast<size_t>(j)] = acc;
    }
    double* save = saved->data() + t * 5 * hid;
    for (int64_t k = 0; k < hid; ++k) {
      const double ig = sigmoid_d(gates[static_cast<size_t>(k)]);
      const double fg = sigmoid_d(gates[static_cast<size_t>(hid + k)]);
      const double gg = std::tanh(gates[static_cast<size_t>(2 * hid + k)]);
      const double og = sigmoid_d(gates[static_cast<size_t>(3 * hid + k)]);
      const double cv = fg * c[static_cast<size_t>(k)] + ig * gg;
      save[k] = ig;
      save[hid + k] = fg;
      save[2 * hid + k] = gg;
      save[3 * hid + k] = og;
      save[4 * hid + k] = cv;
      c[static_cast<size_t>(k)] = cv;
      h[static_cast<size_t>(k)] = og * std::tanh(cv);
      node->value[static_cast<size_t>(t * hid + k)] = h[static_cast<size_t>(k)];
    }
  }

  Tensor out(node);
  if (rg) {
    node->parents = {xg.node(), w_hh.node(), b_hh.node()};
    Node* self = node.get();
    Node* nxg = xg.node().get();
    Node* nw = w_hh.node().get();
    Node* nb = b_hh.node().get();
    self->backprop = [self, nxg, nw, nb, saved, steps, hid, reverse] {
      const int64_t h4 = 4 * hid;
      std::vector<double> dh(static_cast<size_t>(hid), 0.0);
      std::vector<double> dc(static_cast<size_t>(hid), 0.0);
      std::vector<double> dgates(static_cast<size_t>(h4));
      if (nxg->requires_grad) nxg->ensure_grad();
      if (nw->requires_grad) nw->ensure_grad();
      if (nb->requires_grad) nb->ensure_grad();
      for (int64_t i = steps - 1; i >= 0; --i) {
        const int64_t t = reverse ? steps - 1 - i : i;
        const int64_t t_prev = i > 0 ? (reverse ? steps - i : i - 1) : -1;
        const double* save = saved->data() + t * 5 * hid;
        const double* c_prev = t_prev >= 0 ? saved->data() + t_prev * 5 * hid + 4 * hid : nullptr;
        const double* h_prev = t_prev >= 0 ? self->value.data() + t_prev * hid : nullptr;
        for (int64_t k = 0; k < hid; ++k) {
          const double ig = save[k], fg = save[hid + k], gg = save[2 * hid + k];
          const double og = save[3 * hid + k], cv = save[4 * hid + k];
          const double tc = std::tanh(cv);
          const double dhv = dh[static_cast<size_t>(k)] +
                             self->grad[static_cast<size_t>(t * hid + k)];
          const double dov = dhv * tc;
          const double dcv = dc[static_cast<size_t>(k)] + dhv * og * (1.0 - tc * tc);
          const double div = dcv * gg;
          const double dfv = dcv * (c_prev ? c_prev[k] : 0.0);
          const double dgv = dcv * ig;
          dgates[static_cast<size_t>(k)] = div * ig * (1.0 - ig);
          dgates[static_cast<size_t>(hid + k)] = dfv * fg * (1.0 - fg);
          dgates[static_cast<size_t>(2 * hid + k)] = dgv * (1.0 - gg * gg);
          dgates[static_cast<size_t>(3 * hid + k)] = dov * og * (1.0 - og);
          dc[static_cast<size_t>(k)] = dcv * fg;
        }
        if (nxg->requires_grad)
          for (int64_t j = 0; j < h4; ++j)
            nxg->grad[static_cast<size_t>(t * h4 + j)] += dgates[static_cast<size_t>(j)];
        if (nb->requires_grad)
          for (int64_t j = 0; j < h4; ++j)
            nb->grad[static_cast<size_t>(j)] += dgates[static_cast<size_t>(j)];
        if (nw->requires_grad && h_prev)
          for (int64_t j = 0; j < h4; ++j) {
            double* wrow = nw->grad.data() + j * hid;
            const double dgv = dgates[static_cast<size_t>(j)];
            for (int64_t k = 0; k < hid; ++k) wrow[k] += dgv * h_prev[k];
          }
        // dh carried to the previously processed step
        std::fill(dh.begin(), dh.end(), 0.0);
        if (i > 0) {
          const double* whh = nw->value.data();
          for (int64_t j = 0; j < h4; ++j) {
            const double dgv = dgates[static_cast<size_t>(j)];
            const double* wrow = whh + j * hid;
            for (int64_t k = 0; k < hid; ++k) dh[static_cast<size_t>(k)] += dgv * wrow[k];
          }
        }
      }
    };
  }
  return out;
}

Tensor lstm_pass(const LstmDirection& dir, const Tensor& x, bool reverse) {
  Tensor xg = linear(x, dir.w_ih, dir.b_ih);  // [T, 4H]
  return lstm_dir(xg, dir.w_hh, dir.b_hh, reverse);
}

}  // namespace

Tensor BiLstmLayer::forward(const Tensor& x) const {
  Tensor hf = lstm_pass(fwd, x, false);
  Tensor hb = lstm_pass(bwd, x, true);
  return linear(concat_last(hf, hb), proj_w, proj_b);
}

HeadOutput DetectorHead::forward(const Tensor& features, const Tensor& q,
                                 const std::vector<MomentSegment>& anchors) const {
  if (features.rank() != 2)
    throw DimensionError("head: expected features [d, T], got " + shape_str(features.shape()));
  const int64_t steps = features.dim(1);

  Tensor h = transpose(features, {1, 0});  // [T, d]
  for (size_t l = 0; l < layers.size(); ++l) {
    Tensor qp = linear(q, fuse_w[l], fuse_b[l]);
    Tensor fused = mul_axis(h, qp, 1);
    h = add(fused, layers[l].forward(fused));
  }

  HeadOutput out;
  out.start_prob = activation(reshape(linear(h, start_w, start_b), {steps}), Act::sigmoid);
  out.end_prob = activation(reshape(linear(h, end_w, end_b), {steps}), Act::sigmoid);

  std::vector<Tensor> pooled(anchors.size());
  for (size_t i = 0; i < anchors.size(); ++i) {
    int64_t r0 = std::lround(anchors[i].start);
    int64_t r1 = std::lround(anchors[i].end);
    r0 = std::clamp<int64_t>(r0, 0, steps - 1);
    r1 = std::clamp<int64_t>(r1, r0 + 1, steps);
    pooled[i] = row_range_mean(h, r0, r1);
  }
  Tensor anchor_feats = stack_rows(pooled);  // [l_v, d]
  const int64_t lv = static_cast<int64_t>(anchors.size());
  out.iou_score = activation(reshape(linear(anchor_feats, iou_w, iou_b), {lv}), Act::sigmoid);
  out.offsets = linear(anchor_feats, offset_w, offset_b);
  return out;
}

MomentSegment refine(const MomentSegment& anchor, const std::array<double, 4>& offsets,
                     double total_frames) {
  const double ds = offsets[0], de = offsets[1], dc = offsets[2], dw = offsets[3];
  const double width = anchor.length();
  const double center = 0.5 * (anchor.start + anchor.end);
  const double center2 = center + dc * width;
  const double width2 = width * std::exp(dw);
  double s = center2 - width2 / 2 + ds * width;
  double e = center2 + width2 / 2 + de * width;
  s = std::clamp(s, 0.0, total_frames);
  e = std::clamp(e, 0.0, total_frames);
  if (!(s < e) || !std::isfinite(s) || !std::isfinite(e)) {
    return {std::clamp(anchor.start, 0.0, total_frames),
            std::clamp(anchor.end, 0.0, total_frames)};
  }
  return {s, e};
}

std::array<double, 4> offsets_between(const MomentSegment& anchor, const MomentSegment& gt) {
  const double wa = anchor.length();
  const double ca = 0.5 * (anchor.start + anchor.end);
  const double wg = gt.length();
  const double cg = 0.5 * (gt.start + gt.end);
  // center/width carry the full motion; start/end residuals are then zero
  return {0.0, 0.0, (cg - ca) / wa, std::log(wg / wa)};
}

std::vector<ScoredSegment> rank_proposals(const HeadOutput& out,
                                          const std::vector<MomentSegment>& anchors,
                                          double total_frames, int top_k) {
  const size_t lv = anchors.size();
  std::vector<ScoredSegment> refined(lv);
  for (size_t i = 0; i < lv; ++i) {
    std::array<double, 4> o{out.offsets.data()[i * 4 + 0], out.offsets.data()[i * 4 + 1],
                            out.offsets.data()[i * 4 + 2], out.offsets.data()[i * 4 + 3]};
    refined[i] = {refine(anchors[i], o, total_frames), out.iou_score.data()[i]};
  }
  std::vector<size_t> order(lv);
  for (size_t i = 0; i < lv; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (refined[a].score != refined[b].score) return refined[a].score > refined[b].score;
    if (refined[a].segment.start != refined[b].segment.start)
      return refined[a].segment.start < refined[b].segment.start;
    return a < b;
  });
  const size_t keep = std::min<size_t>(lv, top_k < 0 ? lv : static_cast<size_t>(top_k));
  std::vector<ScoredSegment> ranked;
  ranked.reserve(keep);
  for (size_t i = 0; i < keep; ++i) ranked.push_back(refined[order[i]]);
  return ranked;
}

}  // namespace tsg
