#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "tsg/adapter.hpp"
#include "tsg/encoders.hpp"
#include "tsg/head.hpp"

namespace tsg {

struct ModelConfig {
  int vocab = 32;
  int d = 64;
  int input_channels = 4;
  std::vector<int> backbone_widths = {16, 32, 64, 64};
  std::vector<int> strided_blocks = {0, 1, 2};
  std::vector<int> insertion_points = {2, 3};
  int gamma = 4;
  int beta = 2;
  int dwconv_kernel = 3;
  bool use_adapters = true;
  bool text_free = false;
  bool frozen_backbone = true;
  std::vector<int> anchor_scales = {4, 8, 16, 32, 64};
};

// The full grounding network: sentence encoder, adapted video backbone,
// aggregation, detector head.
class GroundingModel {
 public:
  GroundingModel(const ModelConfig& cfg, uint64_t init_seed);

  Tensor encode_sentence(const std::vector<int>& tokens) const;

  struct VideoFeatures {
    Tensor x_b;                  // [d, T]
    std::vector<Tensor> outers;  // each [d, T]
  };

  // Blocks before the first insertion point: the query-independent prefix.
  Tensor encode_prefix(const Tensor& frames) const;
  // Continues from the prefix output through adapters and remaining blocks.
  VideoFeatures encode_tail(const Tensor& prefix_out, const Tensor& q) const;
  VideoFeatures encode_video(const Tensor& frames, const Tensor& q) const;

  Tensor fuse(const VideoFeatures& f) const { return aggregate(f.x_b, f.outers); }

  HeadOutput head_forward(const Tensor& features, const Tensor& q,
                          const std::vector<MomentSegment>& anchors) const {
    return head_.forward(features, q, anchors);
  }

  // Inference: rank refined anchors by their predicted IoU score.
  std::vector<ScoredSegment> infer(const Tensor& frames, const std::vector<int>& tokens,
                                   int top_k) const;

  const AnchorSet& anchors_for(int64_t total_frames) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter> trainable_parameters() const;

  const ModelConfig& config() const { return cfg_; }
  const VideoBackbone& backbone() const { return backbone_; }
  const std::vector<ScadaBlock>& adapters() const { return adapters_; }
  std::vector<ScadaBlock>& adapters() { return adapters_; }
  const DetectorHead& head() const { return head_; }
  DetectorHead& head() { return head_; }

 private:
  ModelConfig cfg_;
  SentenceEncoder sentence_;
  VideoBackbone backbone_;
  std::vector<ScadaBlock> adapters_;
  DetectorHead head_;
  std::vector<Parameter> params_;
  mutable std::mutex anchor_mutex_;  // infer may run concurrently across queries
  mutable AnchorSet anchor_cache_;
  mutable int64_t anchor_cache_frames_ = -1;
  int first_insertion_ = -1;  // block count in the shared prefix
};

}  // namespace tsg
