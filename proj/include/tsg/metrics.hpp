#pragma once

#include <string>
#include <vector>

#include "tsg/data.hpp"
#include "tsg/errors.hpp"
#include "tsg/head.hpp"

namespace tsg {

// |a intersect b| / |a union b| on the real line.
double temporal_iou(const MomentSegment& a, const MomentSegment& b);

struct QueryPrediction {
  std::string video_id;
  int query_index = 0;
  std::vector<ScoredSegment> ranked;
};

// Percentage of queries whose top-n predictions contain one with
// tIoU strictly greater than m (non-strict >= when strict is false).
// Queries with fewer than n predictions use all they have; an empty list
// counts as a miss and records a warning.
double rank_n_at_iou(const std::vector<QueryPrediction>& predictions,
                     const std::vector<MomentSegment>& targets, int n, double m,
                     bool strict = true, WarningLog* wl = nullptr);

// Mean tIoU of the rank-1 prediction, as a percentage.
double mean_iou(const std::vector<QueryPrediction>& predictions,
                const std::vector<MomentSegment>& targets, WarningLog* wl = nullptr);

struct MetricsReport {
  double rank1_iou05 = 0, rank1_iou07 = 0;
  double rank5_iou05 = 0, rank5_iou07 = 0;
  double miou = 0;
};

MetricsReport evaluate(const std::vector<QueryPrediction>& predictions,
                       const std::vector<MomentSegment>& targets, bool strict = true,
                       WarningLog* wl = nullptr);

// One JSON record per line: {"video_id", "query_index", "predictions":
// [[start, end, score], ...]} in frame units.
void write_predictions_jsonl(const std::string& path,
                             const std::vector<QueryPrediction>& predictions);
std::vector<QueryPrediction> read_predictions_jsonl(const std::string& path);

std::string metrics_to_json(const MetricsReport& r);

}  // namespace tsg
