#pragma once

#include <string>
#include <vector>

#include "tsg/data.hpp"
#include "tsg/model.hpp"

namespace tsg {

// Run configuration, parsed from a flat TOML file (dotted keys or
// [section] tables, scalars and one-level arrays). Unknown keys are
// rejected; everything is validated before any work starts.
struct RunConfig {
  SynthConfig data;

  // model knobs (vocab / input channels mirror the data section)
  int d = 64;
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
  double positive_iou = 0.7;

  int batch_size = 32;
  int max_queries_per_video = 8;
  int epochs = 30;
  double lr = 1e-3;
  double weight_decay = 0.01;
  uint64_t train_seed = 7;
  std::vector<std::string> augment_image;
  std::vector<std::string> augment_text;

  bool strict_threshold = true;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  // Canonical form: dotted keys, sorted, one per line.
  std::string serialize() const;

  void validate() const;
  ModelConfig model_config() const;
};

}  // namespace tsg
