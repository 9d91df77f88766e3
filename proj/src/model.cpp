#include "tsg/model.hpp"

#include <algorithm>
#include <cmath>

#include "tsg/errors.hpp"
#include "tsg/ops.hpp"

namespace tsg {

namespace {
constexpr uint64_t kInitStream = 0x1213;

Tensor init_weight(Shape s, int64_t fan_in, Rng& rng, bool trainable) {
  return Tensor::randn(std::move(s), rng, 1.0 / std::sqrt(static_cast<double>(fan_in)),
                       trainable);
}

Tensor init_const(Shape s, double v) {
  Tensor t = Tensor::full(std::move(s), v);
  t.node()->requires_grad = true;
  t.node()->ensure_grad();
  return t;
}
}  // namespace

GroundingModel::GroundingModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  if (cfg.d <= 0 || cfg.vocab <= 0 || cfg.input_channels <= 0)
    throw ConfigError("model dimensions must be positive");
  if (cfg.backbone_widths.empty())
    throw ConfigError("backbone needs at least one block");
  if (cfg.backbone_widths.back() != cfg.d)
    throw ConfigError("final backbone width " + std::to_string(cfg.backbone_widths.back()) +
                      " must equal the model width " + std::to_string(cfg.d));
  if (cfg.d % cfg.gamma != 0)
    throw ConfigError("gamma " + std::to_string(cfg.gamma) + " must divide d " +
                      std::to_string(cfg.d));
  if (cfg.dwconv_kernel % 2 == 0)
    throw ConfigError("dwconv kernel length must be odd");
  const int blocks = static_cast<int>(cfg.backbone_widths.size());
  for (int ip : cfg.insertion_points) {
    if (ip < 0 || ip >= blocks)
      throw ConfigError("insertion point " + std::to_string(ip) + " outside backbone of " +
                        std::to_string(blocks) + " blocks");
    if (cfg.use_adapters && cfg.backbone_widths[static_cast<size_t>(ip)] != cfg.d)
      throw DimensionError("adapter expects width " + std::to_string(cfg.d) +
                           " at insertion point " + std::to_string(ip) + ", block emits " +
                           std::to_string(cfg.backbone_widths[static_cast<size_t>(ip)]));
  }

  Rng rng = Rng::stream(init_seed, kInitStream);
  auto reg = [&](const std::string& name, Tensor t) {
    params_.push_back({name, t});
    return t;
  };

  sentence_.embedding =
      reg("sentence.embedding", Tensor::randn({cfg.vocab, cfg.d}, rng, 0.5, true));

  const bool train_backbone = !cfg.frozen_backbone;
  backbone_.frozen = cfg.frozen_backbone;
  backbone_.insertion_points = cfg.use_adapters ? cfg.insertion_points : std::vector<int>{};
  std::sort(backbone_.insertion_points.begin(), backbone_.insertion_points.end());
  int c_in = cfg.input_channels;
  for (int b = 0; b < blocks; ++b) {
    const int c_out = cfg.backbone_widths[static_cast<size_t>(b)];
    ConvBlock blk;
    blk.weight = reg("backbone." + std::to_string(b) + ".conv.weight",
                     init_weight({c_out, c_in, 3, 3, 3}, c_in * 27, rng, train_backbone));
    blk.bias = reg("backbone." + std::to_string(b) + ".conv.bias",
                   Tensor::zeros({c_out}, train_backbone));
    blk.spatial_stride =
        std::count(cfg.strided_blocks.begin(), cfg.strided_blocks.end(), b) ? 2 : 1;
    backbone_.blocks.push_back(blk);
    c_in = c_out;
  }
  first_insertion_ = backbone_.insertion_points.empty()
                         ? blocks
                         : backbone_.insertion_points.front() + 1;

  const int dg = cfg.d / cfg.gamma;
  for (size_t j = 0; j < backbone_.insertion_points.size(); ++j) {
    const std::string p = "scada." + std::to_string(j) + ".";
    ScadaBlock a;
    a.d = cfg.d;
    a.gamma = cfg.gamma;
    a.beta = cfg.beta;
    a.text_free = cfg.text_free;
    a.fc_down_w = reg(p + "fc_down.weight", init_weight({dg, cfg.d}, cfg.d, rng, true));
    a.fc_down_b = reg(p + "fc_down.bias", Tensor::zeros({dg}, true));
    a.fc_sentence_inner_w =
        reg(p + "fc_sentence_inner.weight", init_weight({dg, cfg.d}, cfg.d, rng, true));
    a.fc_sentence_inner_b = reg(p + "fc_sentence_inner.bias", init_const({dg}, 1.0));
    a.dw_kernel = reg(p + "dwconv.kernel",
                      init_weight({dg, cfg.dwconv_kernel}, cfg.dwconv_kernel, rng, true));
    a.fc_up_w = reg(p + "fc_up.weight", Tensor::zeros({cfg.d, dg}, true));
    a.fc_up_b = reg(p + "fc_up.bias", Tensor::zeros({cfg.d}, true));
    a.conv_down_w =
        reg(p + "conv3d_down.weight",
            init_weight({dg, cfg.d, 1, cfg.beta, cfg.beta}, cfg.d * cfg.beta * cfg.beta,
                        rng, true));
    a.conv_down_b = reg(p + "conv3d_down.bias", Tensor::zeros({dg}, true));
    a.fc_sentence_outer_w =
        reg(p + "fc_sentence_outer.weight", init_weight({dg, cfg.d}, cfg.d, rng, true));
    a.fc_sentence_outer_b = reg(p + "fc_sentence_outer.bias", init_const({dg}, 1.0));
    a.conv_up_w = reg(p + "conv3d_up.weight", Tensor::zeros({cfg.d, dg, 1, 1, 1}, true));
    a.conv_up_b = reg(p + "conv3d_up.bias", Tensor::zeros({cfg.d}, true));
    adapters_.push_back(a);
  }

  // detector head: two fused residual BiLSTM layers
  const int d = cfg.d;
  for (int l = 0; l < 2; ++l) {
    const std::string p = "head.fuse." + std::to_string(l) + ".";
    head_.fuse_w.push_back(reg(p + "weight", init_weight({d, d}, d, rng, true)));
    head_.fuse_b.push_back(reg(p + "bias", init_const({d}, 1.0)));

    BiLstmLayer layer;
    for (int dir = 0; dir < 2; ++dir) {
      const std::string q =
          "head.lstm." + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
      LstmDirection& ld = dir == 0 ? layer.fwd : layer.bwd;
      ld.w_ih = reg(q + "w_ih", init_weight({4 * d, d}, d, rng, true));
      Tensor bih = Tensor::zeros({4 * d}, true);
      for (int i = d; i < 2 * d; ++i) bih.data()[i] = 1.0;  // forget-gate bias
      ld.b_ih = reg(q + "b_ih", bih);
      ld.w_hh = reg(q + "w_hh", init_weight({4 * d, d}, d, rng, true));
      ld.b_hh = reg(q + "b_hh", Tensor::zeros({4 * d}, true));
    }
    const std::string q = "head.lstm." + std::to_string(l) + ".proj.";
    layer.proj_w = reg(q + "weight", init_weight({d, 2 * d}, 2 * d, rng, true));
    layer.proj_b = reg(q + "bias", Tensor::zeros({d}, true));
    head_.layers.push_back(layer);
  }
  head_.start_w = reg("head.start.weight", init_weight({1, d}, d, rng, true));
  head_.start_b = reg("head.start.bias", Tensor::zeros({1}, true));
  head_.end_w = reg("head.end.weight", init_weight({1, d}, d, rng, true));
  head_.end_b = reg("head.end.bias", Tensor::zeros({1}, true));
  head_.iou_w = reg("head.iou.weight", init_weight({1, d}, d, rng, true));
  head_.iou_b = reg("head.iou.bias", Tensor::zeros({1}, true));
  head_.offset_w = reg("head.offset.weight", init_weight({4, d}, d, rng, true));
  head_.offset_b = reg("head.offset.bias", Tensor::zeros({4}, true));
}

Tensor GroundingModel::encode_sentence(const std::vector<int>& tokens) const {
  return sentence_.encode(tokens);
}

Tensor GroundingModel::encode_prefix(const Tensor& frames) const {
  Tensor h = frames;
  for (int b = 0; b < first_insertion_; ++b)
    h = backbone_.blocks[static_cast<size_t>(b)].forward(h);
  return h;
}

GroundingModel::VideoFeatures GroundingModel::encode_tail(const Tensor& prefix_out,
                                                          const Tensor& q) const {
  VideoFeatures f;
  Tensor h = prefix_out;
  size_t adapter_idx = 0;
  // the prefix ends right after the first insertion point's block, so the
  // first adapter applies before any further block runs
  auto apply_adapter_after = [&](int block_index) {
    if (adapter_idx < backbone_.insertion_points.size() &&
        backbone_.insertion_points[adapter_idx] == block_index) {
      const ScadaBlock& a = adapters_[adapter_idx];
      f.outers.push_back(a.outer_branch(h, q));
      h = a.inner_branch(h, q);
      ++adapter_idx;
    }
  };
  apply_adapter_after(first_insertion_ - 1);
  for (int b = first_insertion_; b < static_cast<int>(backbone_.blocks.size()); ++b) {
    h = backbone_.blocks[static_cast<size_t>(b)].forward(h);
    apply_adapter_after(b);
  }
  f.x_b = spatial_mean(h);
  return f;
}

GroundingModel::VideoFeatures GroundingModel::encode_video(const Tensor& frames,
                                                           const Tensor& q) const {
  return encode_tail(encode_prefix(frames), q);
}

const AnchorSet& GroundingModel::anchors_for(int64_t total_frames) const {
  std::lock_guard<std::mutex> lock(anchor_mutex_);
  if (anchor_cache_frames_ != total_frames) {
    anchor_cache_ = AnchorSet::build(total_frames, cfg_.anchor_scales);
    anchor_cache_frames_ = total_frames;
  }
  return anchor_cache_;
}

std::vector<ScoredSegment> GroundingModel::infer(const Tensor& frames,
                                                 const std::vector<int>& tokens,
                                                 int top_k) const {
  NoGradGuard ng;
  const int64_t total_frames = frames.dim(1);
  Tensor q = encode_sentence(tokens);
  VideoFeatures f = encode_video(frames, q);
  Tensor features = fuse(f);
  const AnchorSet& anchors = anchors_for(total_frames);
  HeadOutput out = head_.forward(features, q, anchors.anchors);
  return rank_proposals(out, anchors.anchors, static_cast<double>(total_frames), top_k);
}

std::vector<Parameter> GroundingModel::trainable_parameters() const {
  std::vector<Parameter> out;
  for (const auto& p : params_)
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

}  // namespace tsg
