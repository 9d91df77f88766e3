#pragma once

#include <vector>

#include "tsg/data.hpp"
#include "tsg/errors.hpp"
#include "tsg/model.hpp"

namespace tsg {

// Video-centric mini-batch: groups of (video, queries) so backbone
// features are computed once per video per batch.
struct TrainBatch {
  struct Group {
    int video_index = 0;
    std::vector<int> query_ids;  // indices into Dataset::queries
  };
  std::vector<Group> groups;
  int total_pairs = 0;
};

struct ForwardCounter {
  int64_t backbone_forwards = 0;  // shared prefix runs
  int64_t pair_forwards = 0;      // (video, query) passes
};

// Shuffles videos by seed and emits every (video, query) pair exactly
// once. A video contributes at most `max_queries_per_video` queries per
// group; its remainder carries over to later batches. Zero-query videos
// are skipped with a warning.
std::vector<TrainBatch> build_epoch(const Dataset& ds, int batch_size,
                                    int max_queries_per_video, uint64_t seed,
                                    WarningLog* wl = nullptr);

struct BatchInputs {
  const Dataset* ds = nullptr;
  // optional per-epoch overrides (augmentation); indexed like ds->videos / ds->queries
  const std::vector<Tensor>* frames_override = nullptr;
  const std::vector<std::vector<int>>* tokens_override = nullptr;
  double theta = 0.7;  // positive-anchor IoU threshold
};

struct BatchResult {
  Tensor loss;  // mean over pairs, differentiable
  double boundary = 0, iou = 0, offset = 0, total = 0;  // components, mean over pairs
};

// Runs the shared backbone prefix once per group and the query-dependent
// tail once per pair; the ground-truth segment is appended to the anchor
// list for supervision.
BatchResult run_batch(const TrainBatch& batch, GroundingModel& model,
                      const BatchInputs& inputs, ForwardCounter& counter,
                      WarningLog* wl = nullptr);

}  // namespace tsg
