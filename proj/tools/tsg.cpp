// Command line for the grounding toy: dataset generation, training,
// prediction, evaluation and the ablation study.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsg/checkpoint.hpp"
#include "tsg/config.hpp"
#include "tsg/data.hpp"
#include "tsg/errors.hpp"
#include "tsg/metrics.hpp"
#include "tsg/trainer.hpp"

namespace fs = std::filesystem;
using namespace tsg;

namespace {

struct Args {
  std::string config;
  std::string data_dir;
  std::string run_dir;
  std::string out;
  std::string predictions;
  int64_t seed = -1;
  bool force = false;
};

RunConfig load_config(const Args& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::from_file(a.config);
  if (a.seed >= 0) cfg.train_seed = static_cast<uint64_t>(a.seed);
  return cfg;
}

void ensure_out_dir(const std::string& out, bool force) {
  fs::path p(out);
  if (fs::exists(p) && !fs::is_empty(p)) {
    if (!force)
      throw ConfigError("output directory " + out + " is not empty (use --force)");
    fs::remove_all(p);
  }
  fs::create_directories(p);
}

int cmd_gen_data(const Args& a) {
  RunConfig cfg = load_config(a);
  Dataset ds = generate(cfg.data);
  write_dataset(a.out, ds, a.force);
  int64_t pairs = static_cast<int64_t>(ds.queries.size());
  std::printf("wrote %zu videos, %lld query pairs to %s\n", ds.videos.size(),
              static_cast<long long>(pairs), a.out.c_str());
  return 0;
}

int cmd_train(const Args& a) {
  RunConfig cfg = load_config(a);
  ensure_out_dir(a.out, a.force);
  Dataset ds = load_dataset(a.data_dir);
  WarningLog wl;
  train_model(cfg, ds, a.out, &wl);
  for (const auto& w : wl.records) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("trained %d epochs, checkpoint in %s\n", cfg.epochs, a.out.c_str());
  return 0;
}

int cmd_predict(const Args& a) {
  Dataset ds = load_dataset(a.data_dir);
  auto model = load_model(a.run_dir);
  auto preds = predict_all(*model, ds, 5);
  write_predictions_jsonl(a.out, preds);
  std::printf("wrote %zu prediction records to %s\n", preds.size(), a.out.c_str());
  return 0;
}

int cmd_eval(const Args& a) {
  Dataset ds = load_dataset(a.data_dir);
  RunConfig cfg;
  std::vector<QueryPrediction> preds;
  if (!a.predictions.empty()) {
    cfg = RunConfig::from_file((fs::path(a.run_dir) / "config.toml").string());
    preds = read_predictions_jsonl(a.predictions);
  } else {
    auto model = load_model(a.run_dir, &cfg);
    preds = predict_all(*model, ds, 5);
  }
  WarningLog wl;
  MetricsReport report = evaluate(preds, dataset_targets(ds), cfg.strict_threshold, &wl);
  for (const auto& w : wl.records) std::fprintf(stderr, "warning: %s\n", w.c_str());

  std::string text = metrics_to_json(report);
  if (!a.out.empty()) {
    fs::create_directories(fs::path(a.out).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(a.out).parent_path());
    std::ofstream os(a.out);
    os << text;
  }
  std::cout << text;
  return 0;
}

int cmd_ablate(const Args& a) {
  RunConfig cfg = load_config(a);
  ensure_out_dir(a.out, a.force);
  Dataset ds = load_dataset(a.data_dir);
  WarningLog wl;
  AblationReport report = ablate(cfg, ds, a.out, &wl);
  std::cout << ablation_table(report);
  std::printf("report written to %s/report.json\n", a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal sentence grounding on synthetic videos"};
  app.require_subcommand(1);
  Args a;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", a.config, "run config (TOML)");
  gen->add_option("--out", a.out, "output dataset directory")->required();
  gen->add_flag("--force", a.force, "overwrite a non-empty output directory");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", a.config, "run config (TOML)");
  train->add_option("--data", a.data_dir, "dataset directory")->required();
  train->add_option("--out", a.out, "run output directory")->required();
  train->add_option("--seed", a.seed, "override train.seed");
  train->add_flag("--force", a.force, "overwrite a non-empty output directory");

  auto* predict = app.add_subcommand("predict", "write ranked predictions as JSONL");
  predict->add_option("--run", a.run_dir, "trained run directory")->required();
  predict->add_option("--data", a.data_dir, "dataset directory")->required();
  predict->add_option("--out", a.out, "output JSONL path")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a trained run");
  eval->add_option("--run", a.run_dir, "trained run directory")->required();
  eval->add_option("--data", a.data_dir, "dataset directory")->required();
  eval->add_option("--out", a.out, "metrics JSON output path");
  eval->add_option("--predictions", a.predictions, "evaluate an existing JSONL instead");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the four variants");
  ablate_cmd->add_option("--config", a.config, "run config (TOML)");
  ablate_cmd->add_option("--data", a.data_dir, "dataset directory")->required();
  ablate_cmd->add_option("--out", a.out, "report output directory")->required();
  ablate_cmd->add_option("--seed", a.seed, "override train.seed");
  ablate_cmd->add_flag("--force", a.force, "overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(a);
    if (train->parsed()) return cmd_train(a);
    if (predict->parsed()) return cmd_predict(a);
    if (eval->parsed()) return cmd_eval(a);
    if (ablate_cmd->parsed()) return cmd_ablate(a);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
