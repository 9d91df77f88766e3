#include "tsg/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tsg/checkpoint.hpp"
#include "tsg/losses.hpp"
#include "tsg/ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsg {

namespace {
constexpr uint64_t kEpochStream = 0xba7c4;
constexpr uint64_t kImageAugStream = 0xa06;
constexpr uint64_t kTextAugStream = 0x7e87;
}  // namespace

void AdamW::step(std::vector<Parameter>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i].tensor.numel()), 0.0);
      v_[i].assign(static_cast<size_t>(params[i].tensor.numel()), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    double* x = params[i].tensor.data();
    const std::vector<double>& g = params[i].tensor.grad();
    for (size_t j = 0; j < g.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double mh = m_[i][j] / bc1;
      const double vh = v_[i][j] / bc2;
      x[j] -= lr_ * (mh / (std::sqrt(vh) + eps_) + wd_ * x[j]);
    }
  }
}

void AdamW::zero_grads(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

namespace {

std::vector<Tensor> augmented_frames(const RunConfig& cfg, const Dataset& ds, int epoch) {
  std::set<ImgAug> ops;
  for (const auto& s : cfg.augment_image) ops.insert(img_aug_from_string(s));
  std::vector<Tensor> out(ds.videos.size());
  for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
    uint64_t seed = Rng::stream(cfg.train_seed, kImageAugStream + static_cast<uint64_t>(epoch), vi).u64();
    out[vi] = augment_image(ds.videos[vi].frames, ops, seed);
  }
  return out;
}

std::vector<std::vector<int>> augmented_tokens(const RunConfig& cfg, const Dataset& ds,
                                               int epoch) {
  std::vector<TextAug> kinds;
  for (const auto& s : cfg.augment_text) kinds.push_back(text_aug_from_string(s));
  std::vector<std::vector<int>> out(ds.queries.size());
  for (size_t qi = 0; qi < ds.queries.size(); ++qi) {
    std::vector<int> tokens = ds.queries[qi].tokens;
    for (size_t k = 0; k < kinds.size(); ++k) {
      uint64_t seed = Rng::stream(cfg.train_seed,
                                  kTextAugStream + static_cast<uint64_t>(epoch) * 8 + k, qi)
                          .u64();
      tokens = augment_text(tokens, kinds[k], ds.synonyms, ds.vocab, seed);
    }
    out[qi] = std::move(tokens);
  }
  return out;
}

}  // namespace

std::unique_ptr<GroundingModel> train_model(const RunConfig& cfg, const Dataset& ds,
                                            const std::string& out_dir, WarningLog* wl) {
  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "config.toml");
    if (!os) throw InputError("cannot write config into " + out_dir);
    os << cfg.serialize();
  }

  auto model = std::make_unique<GroundingModel>(cfg.model_config(), cfg.train_seed);
  std::vector<Parameter> trainable = model->trainable_parameters();
  AdamW opt(cfg.lr, cfg.weight_decay);

  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.scg1").string();
  save_checkpoint(ckpt_path, model->parameters());

  std::ofstream log(fs::path(out_dir) / "train_log.csv");
  log << "record,epoch,step,boundary,iou,offset,total,backbone_forwards,pair_forwards\n";

  BatchInputs inputs;
  inputs.ds = &ds;
  inputs.theta = cfg.positive_iou;

  int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Tensor> frames_aug;
    std::vector<std::vector<int>> tokens_aug;
    if (!cfg.augment_image.empty()) {
      frames_aug = augmented_frames(cfg, ds, epoch);
      inputs.frames_override = &frames_aug;
    } else {
      inputs.frames_override = nullptr;
    }
    if (!cfg.augment_text.empty()) {
      tokens_aug = augmented_tokens(cfg, ds, epoch);
      inputs.tokens_override = &tokens_aug;
    } else {
      inputs.tokens_override = nullptr;
    }

    const uint64_t epoch_seed =
        Rng::stream(cfg.train_seed, kEpochStream, static_cast<uint64_t>(epoch)).u64();
    std::vector<TrainBatch> batches =
        build_epoch(ds, cfg.batch_size, cfg.max_queries_per_video, epoch_seed, wl);

    ForwardCounter counter;
    for (const TrainBatch& batch : batches) {
      AdamW::zero_grads(trainable);
      BatchResult res = run_batch(batch, *model, inputs, counter, wl);
      ++step;
      if (!std::isfinite(res.total)) {
        log << "abort," << epoch << "," << step << ",,,," << res.total << ",,\n";
        throw ContractError("non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      backward(res.loss);
      opt.step(trainable);
      log << "step," << epoch << "," << step << "," << res.boundary << "," << res.iou
          << "," << res.offset << "," << res.total << ",,\n";
    }
    log << "epoch," << epoch << ",,,,,," << counter.backbone_forwards << ","
        << counter.pair_forwards << "\n";
    save_checkpoint(ckpt_path, model->parameters());
  }
  return model;
}

std::vector<QueryPrediction> predict_all(const GroundingModel& model, const Dataset& ds,
                                         int top_k) {
  NoGradGuard ng;
  std::vector<QueryPrediction> out;
  out.reserve(ds.queries.size());
  size_t qi = 0;
  for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
    const VideoSample& v = ds.videos[vi];
    Tensor prefix;
    const int64_t total_frames = v.frames.dim(1);
    while (qi < ds.queries.size() && ds.queries[qi].video_index == static_cast<int>(vi)) {
      const QuerySample& q = ds.queries[qi];
      if (!prefix.defined()) prefix = model.encode_prefix(v.frames);
      Tensor qv = model.encode_sentence(q.tokens);
      auto feats = model.encode_tail(prefix, qv);
      Tensor features = model.fuse(feats);
      const AnchorSet& anchors = model.anchors_for(total_frames);
      HeadOutput ho = model.head_forward(features, qv, anchors.anchors);
      QueryPrediction p;
      p.video_id = q.video_id;
      p.query_index = q.query_index;
      p.ranked = rank_proposals(ho, anchors.anchors, static_cast<double>(total_frames), top_k);
      out.push_back(std::move(p));
      ++qi;
    }
  }
  return out;
}

std::vector<MomentSegment> dataset_targets(const Dataset& ds) {
  std::vector<MomentSegment> t;
  t.reserve(ds.queries.size());
  for (const auto& q : ds.queries) t.push_back(q.target);
  return t;
}

std::unique_ptr<GroundingModel> load_model(const std::string& run_dir, RunConfig* cfg_out) {
  RunConfig cfg = RunConfig::from_file((fs::path(run_dir) / "config.toml").string());
  auto model = std::make_unique<GroundingModel>(cfg.model_config(), cfg.train_seed);
  auto entries = load_checkpoint((fs::path(run_dir) / "checkpoint.scg1").string());
  restore_parameters(entries, model->parameters());
  if (cfg_out) *cfg_out = cfg;
  return model;
}

namespace {
MetricsReport mean_of(const std::vector<MetricsReport>& rs) {
  MetricsReport m;
  for (const auto& r : rs) {
    m.rank1_iou05 += r.rank1_iou05;
    m.rank1_iou07 += r.rank1_iou07;
    m.rank5_iou05 += r.rank5_iou05;
    m.rank5_iou07 += r.rank5_iou07;
    m.miou += r.miou;
  }
  const double n = static_cast<double>(rs.size());
  m.rank1_iou05 /= n;
  m.rank1_iou07 /= n;
  m.rank5_iou05 /= n;
  m.rank5_iou07 /= n;
  m.miou /= n;
  return m;
}

json metrics_json(const MetricsReport& r) {
  return json{{"rank1_iou05", r.rank1_iou05}, {"rank1_iou07", r.rank1_iou07},
              {"rank5_iou05", r.rank5_iou05}, {"rank5_iou07", r.rank5_iou07},
              {"miou", r.miou}};
}
}  // namespace

AblationReport ablate(const RunConfig& base, const Dataset& ds, const std::string& out_dir,
                      WarningLog* wl) {
  // the freeze switch is the Table-2 axis: the E2E variant jointly
  // optimizes the backbone through the adapters, the rest keep it frozen
  struct Variant {
    const char* name;
    bool frozen;
    bool use_adapters;
    bool text_free;
  };
  const Variant variants[] = {
      {"frozen_baseline", true, false, false},
      {"e2e_scada", false, true, false},
      {"scada_text_free", true, true, true},
      {"scada_with_text", true, true, false},
  };

  fs::create_directories(out_dir);
  std::map<std::string, MetricsReport> memo;  // canonical config -> metrics

  AblationReport report;
  for (const Variant& var : variants) {
    VariantResult res;
    res.name = var.name;
    for (uint64_t offset = 0; offset < 3; ++offset) {
      RunConfig cfg = base;
      cfg.use_adapters = var.use_adapters;
      cfg.text_free = var.text_free;
      cfg.frozen_backbone = var.frozen;
      cfg.train_seed = base.train_seed + offset;
      const std::string canonical = cfg.serialize();
      res.seeds.push_back(cfg.train_seed);
      if (offset == 0) res.config = canonical;

      auto it = memo.find(canonical);
      if (it != memo.end()) {
        res.per_seed.push_back(it->second);
        continue;
      }
      const std::string run_dir =
          (fs::path(out_dir) / ("run_" + res.name + "_seed" + std::to_string(cfg.train_seed)))
              .string();
      auto model = train_model(cfg, ds, run_dir, wl);
      auto preds = predict_all(*model, ds, 5);
      MetricsReport m = evaluate(preds, dataset_targets(ds), cfg.strict_threshold, wl);
      memo[canonical] = m;
      res.per_seed.push_back(m);
    }
    res.mean = mean_of(res.per_seed);
    report.variants.push_back(std::move(res));
  }

  report.e2e_gain_rank1_iou05 =
      report.variants[1].mean.rank1_iou05 - report.variants[0].mean.rank1_iou05;
  report.text_gain_rank1_iou05 =
      report.variants[3].mean.rank1_iou05 - report.variants[2].mean.rank1_iou05;
  report.text_gain_miou = report.variants[3].mean.miou - report.variants[2].mean.miou;

  std::ofstream os(fs::path(out_dir) / "report.json");
  os << ablation_to_json(report);
  return report;
}

std::string ablation_to_json(const AblationReport& r) {
  json j;
  json vars = json::array();
  for (const auto& v : r.variants) {
    json jv;
    jv["name"] = v.name;
    jv["config"] = v.config;
    json seeds = json::array();
    for (size_t i = 0; i < v.seeds.size(); ++i)
      seeds.push_back({{"seed", v.seeds[i]}, {"metrics", metrics_json(v.per_seed[i])}});
    jv["seeds"] = seeds;
    jv["mean"] = metrics_json(v.mean);
    vars.push_back(jv);
  }
  j["variants"] = vars;
  j["e2e_gain_rank1_iou05"] = r.e2e_gain_rank1_iou05;
  j["text_gain_rank1_iou05"] = r.text_gain_rank1_iou05;
  j["text_gain_miou"] = r.text_gain_miou;
  return j.dump(2) + "\n";
}

std::string ablation_table(const AblationReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %8s %8s %8s %8s %8s\n", "variant", "R1@0.5",
                "R1@0.7", "R5@0.5", "R5@0.7", "mIoU");
  os << buf;
  for (const auto& v : r.variants) {
    for (size_t i = 0; i < v.per_seed.size(); ++i) {
      const auto& m = v.per_seed[i];
      std::snprintf(buf, sizeof buf, "%-18s %8.2f %8.2f %8.2f %8.2f %8.2f   (seed %llu)\n",
                    i == 0 ? v.name.c_str() : "", m.rank1_iou05, m.rank1_iou07,
                    m.rank5_iou05, m.rank5_iou07, m.miou,
                    static_cast<unsigned long long>(v.seeds[i]));
      os << buf;
    }
    const auto& m = v.mean;
    std::snprintf(buf, sizeof buf, "%-18s %8.2f %8.2f %8.2f %8.2f %8.2f   (mean)\n", "",
                  m.rank1_iou05, m.rank1_iou07, m.rank5_iou05, m.rank5_iou07, m.miou);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "\ne2e gain R1@0.5: %+.2f   text gain R1@0.5: %+.2f   text gain mIoU: %+.2f\n",
                r.e2e_gain_rank1_iou05, r.text_gain_rank1_iou05, r.text_gain_miou);
  os << buf;
  return os.str();
}

}  // namespace tsg
