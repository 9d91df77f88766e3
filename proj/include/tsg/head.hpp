#pragma once

#include <array>
#include <vector>

#include "tsg/data.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

// Multi-scale anchors with 50% overlapping stride, clipped to [0, T).
struct AnchorSet {
  std::vector<MomentSegment> anchors;

  static AnchorSet build(int64_t total_frames, const std::vector<int>& scales);
};

struct HeadOutput {
  Tensor start_prob;  // [T], in (0,1)
  Tensor end_prob;    // [T]
  Tensor iou_score;   // [l_v]
  Tensor offsets;     // [l_v, 4]: (start, end, center, width) deltas
};

struct LstmDirection {
  Tensor w_ih, b_ih;  // [4H, d_in], [4H]
  Tensor w_hh, b_hh;  // [4H, H], [4H]
};

// Bidirectional LSTM of hidden width d with a projection back to d.
struct BiLstmLayer {
  LstmDirection fwd, bwd;
  Tensor proj_w, proj_b;  // [d, 2H], [d]

  Tensor forward(const Tensor& x) const;  // [T, d] -> [T, d]
};

// Two residual BiLSTM layers, each preceded by sentence fusion, with
// per-step boundary heads and per-anchor IoU/offset heads.
struct DetectorHead {
  std::vector<Tensor> fuse_w, fuse_b;  // per layer [d, d], [d]
  std::vector<BiLstmLayer> layers;
  Tensor start_w, start_b;    // [1, d], [1]
  Tensor end_w, end_b;
  Tensor iou_w, iou_b;        // [1, d], [1]
  Tensor offset_w, offset_b;  // [4, d], [4]

  HeadOutput forward(const Tensor& features, const Tensor& q,
                     const std::vector<MomentSegment>& anchors) const;
};

// Offset refinement:
//   center' = center + dc*width,  width' = width*exp(dw),
//   start' = center' - width'/2 + ds*width,  end' = center' + width'/2 + de*width,
// clipped to [0, total_frames); a degenerate result falls back to the
// clipped anchor.
MomentSegment refine(const MomentSegment& anchor, const std::array<double, 4>& offsets,
                     double total_frames);

// Exact offsets mapping anchor onto gt under refine (ds = de = 0).
std::array<double, 4> offsets_between(const MomentSegment& anchor, const MomentSegment& gt);

struct ScoredSegment {
  MomentSegment segment;
  double score = 0;
};

// Ranks refined anchors by score descending, ties broken by earlier start
// then smaller anchor index. top_k beyond l_v returns all l_v.
std::vector<ScoredSegment> rank_proposals(const HeadOutput& out,
                                          const std::vector<MomentSegment>& anchors,
                                          double total_frames, int top_k);

}  // namespace tsg
