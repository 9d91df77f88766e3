#include "tsg/sampler.hpp"

#include <deque>

#include "tsg/losses.hpp"
#include "tsg/ops.hpp"

namespace tsg {

std::vector<TrainBatch> build_epoch(const Dataset& ds, int batch_size,
                                    int max_queries_per_video, uint64_t seed,
                                    WarningLog* wl) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (max_queries_per_video < 1) throw ConfigError("max queries per video must be >= 1");

  std::vector<std::vector<int>> per_video(ds.videos.size());
  for (size_t qi = 0; qi < ds.queries.size(); ++qi)
    per_video[static_cast<size_t>(ds.queries[qi].video_index)].push_back(static_cast<int>(qi));

  Rng rng(seed);
  std::vector<int> video_order;
  for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
    if (per_video[vi].empty()) {
      warn(wl, "video " + ds.videos[vi].id + " has no queries, skipped");
      continue;
    }
    rng.shuffle(per_video[vi]);
    video_order.push_back(static_cast<int>(vi));
  }
  rng.shuffle(video_order);

  std::deque<std::pair<int, size_t>> queue;  // (video, cursor into its query list)
  for (int vi : video_order) queue.emplace_back(vi, 0);

  std::vector<TrainBatch> batches;
  TrainBatch current;
  auto flush = [&] {
    if (!current.groups.empty()) {
      batches.push_back(std::move(current));
      current = TrainBatch{};
    }
  };

  while (!queue.empty()) {
    auto [vi, cursor] = queue.front();
    queue.pop_front();
    const auto& qs = per_video[static_cast<size_t>(vi)];
    const size_t remaining = qs.size() - cursor;
    const size_t take = std::min<size_t>(remaining, static_cast<size_t>(max_queries_per_video));

    bool already_in_batch = false;
    for (const auto& g : current.groups)
      if (g.video_index == vi) already_in_batch = true;
    if (already_in_batch ||
        (current.total_pairs > 0 &&
         current.total_pairs + static_cast<int>(take) > batch_size))
      flush();

    TrainBatch::Group g;
    g.video_index = vi;
    g.query_ids.assign(qs.begin() + static_cast<std::ptrdiff_t>(cursor),
                       qs.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    current.total_pairs += static_cast<int>(take);
    current.groups.push_back(std::move(g));

    if (cursor + take < qs.size()) queue.emplace_back(vi, cursor + take);
    if (current.total_pairs >= batch_size) flush();
  }
  flush();
  return batches;
}

BatchResult run_batch(const TrainBatch& batch, GroundingModel& model,
                      const BatchInputs& inputs, ForwardCounter& counter,
                      WarningLog* wl) {
  if (batch.groups.empty() || batch.total_pairs == 0)
    throw ContractError("run_batch: empty batch");
  const Dataset& ds = *inputs.ds;

  BatchResult result;
  Tensor loss_sum;
  int pairs = 0;
  for (const auto& group : batch.groups) {
    const Tensor& frames = inputs.frames_override
                               ? (*inputs.frames_override)[static_cast<size_t>(group.video_index)]
                               : ds.videos[static_cast<size_t>(group.video_index)].frames;
    const int64_t total_frames = frames.dim(1);
    Tensor prefix = model.encode_prefix(frames);
    counter.backbone_forwards += 1;

    // supervision anchors: the fixed set plus the ground truth itself
    const AnchorSet& base = model.anchors_for(total_frames);

    for (int qid : group.query_ids) {
      const QuerySample& q = ds.queries[static_cast<size_t>(qid)];
      const std::vector<int>& tokens =
          inputs.tokens_override ? (*inputs.tokens_override)[static_cast<size_t>(qid)] : q.tokens;
      Tensor qv = model.encode_sentence(tokens);
      auto feats = model.encode_tail(prefix, qv);
      Tensor features = model.fuse(feats);

      std::vector<MomentSegment> anchors = base.anchors;
      anchors.push_back(q.target);
      HeadOutput out = model.head_forward(features, qv, anchors);
      SupervisionTargets targets = build_targets(q.target, anchors, total_frames, inputs.theta);

      Tensor lb = boundary_loss(out.start_prob, out.end_prob, targets.start_label,
                                targets.end_label, wl);
      Tensor li = iou_loss(out.iou_score, targets.iou_target, targets.iou_class, wl);
      Tensor lo = offset_loss(out.offsets, targets.offset_target, targets.iou_class);
      Tensor pair_loss = add(add(lb, li), lo);

      result.boundary += lb.item();
      result.iou += li.item();
      result.offset += lo.item();
      loss_sum = pairs == 0 ? pair_loss : add(loss_sum, pair_loss);
      counter.pair_forwards += 1;
      ++pairs;
    }
  }
  result.loss = scale(loss_sum, 1.0 / static_cast<double>(pairs));
  result.boundary /= pairs;
  result.iou /= pairs;
  result.offset /= pairs;
  result.total = result.loss.item();
  return result;
}

}  // namespace tsg
