#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsg/config.hpp"
#include "tsg/metrics.hpp"
#include "tsg/model.hpp"
#include "tsg/sampler.hpp"

namespace tsg {

// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Parameter>& params);
  static void zero_grads(std::vector<Parameter>& params);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Trains a fresh model on the dataset, writing config.toml,
// checkpoint.scg1 (each epoch) and train_log.csv into out_dir.
std::unique_ptr<GroundingModel> train_model(const RunConfig& cfg, const Dataset& ds,
                                            const std::string& out_dir,
                                            WarningLog* wl = nullptr);

// Ranked top-k predictions for every query, in dataset order, sharing the
// backbone prefix across each video's queries.
std::vector<QueryPrediction> predict_all(const GroundingModel& model, const Dataset& ds,
                                         int top_k = 5);

std::vector<MomentSegment> dataset_targets(const Dataset& ds);

// Rebuilds the model recorded in run_dir (config.toml + checkpoint.scg1).
std::unique_ptr<GroundingModel> load_model(const std::string& run_dir, RunConfig* cfg_out = nullptr);

struct VariantResult {
  std::string name;
  std::string config;  // canonical, seed excluded
  std::vector<uint64_t> seeds;
  std::vector<MetricsReport> per_seed;
  MetricsReport mean;
};

struct AblationReport {
  std::vector<VariantResult> variants;  // frozen_baseline, e2e_scada, scada_text_free, scada_with_text
  double e2e_gain_rank1_iou05 = 0;      // e2e_scada - frozen_baseline, mean
  double text_gain_rank1_iou05 = 0;     // scada_with_text - scada_text_free, mean
  double text_gain_miou = 0;
};

// Trains the four ablation variants over base seed, seed+1, seed+2 with
// shared seeds and evaluates each on the dataset. Identical variant
// configs reuse the already-trained run (training is deterministic).
AblationReport ablate(const RunConfig& base, const Dataset& ds, const std::string& out_dir,
                      WarningLog* wl = nullptr);

std::string ablation_to_json(const AblationReport& r);
std::string ablation_table(const AblationReport& r);

}  // namespace tsg
