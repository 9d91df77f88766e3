#pragma once

#include <vector>

#include "tsg/data.hpp"
#include "tsg/errors.hpp"
#include "tsg/head.hpp"

namespace tsg {

// Training targets for one query against a fixed anchor list. Boundary
// labels are widened to +/-1 frame; offset targets are defined only on
// positive anchors (iou_target >= theta).
struct SupervisionTargets {
  std::vector<double> start_label, end_label;  // [T], values in {0,1}
  std::vector<double> iou_target;              // [l_v]
  std::vector<double> iou_class;               // [l_v], values in {0,1}
  std::vector<double> offset_target;           // [l_v * 4]
};

SupervisionTargets build_targets(const MomentSegment& gt,
                                 const std::vector<MomentSegment>& anchors,
                                 int64_t total_frames, double theta);

// Positive/negative balanced BCE over the start and end probability
// tracks, summed. A vanished class drops its balancing coefficient and
// records a warning.
Tensor boundary_loss(const Tensor& start_prob, const Tensor& end_prob,
                     const std::vector<double>& start_label,
                     const std::vector<double>& end_label, WarningLog* wl = nullptr);

// Balanced BCE against iou_class plus mean squared error against
// iou_target, equally weighted.
Tensor iou_loss(const Tensor& iou_score, const std::vector<double>& iou_target,
                const std::vector<double>& iou_class, WarningLog* wl = nullptr);

// Smooth-L1 over the 4 offset components, averaged over positive anchors;
// zero when there are none.
Tensor offset_loss(const Tensor& offsets, const std::vector<double>& offset_target,
                   const std::vector<double>& iou_class);

// L = L_b + L_iou + L_offset (unit weights).
Tensor total_loss(const HeadOutput& out, const SupervisionTargets& targets,
                  WarningLog* wl = nullptr);

}  // namespace tsg
