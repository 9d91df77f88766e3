#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsg/checkpoint.hpp"
#include "tsg/config.hpp"
#include "tsg/metrics.hpp"
#include "tsg/trainer.hpp"

using namespace tsg;
namespace fs = std::filesystem;

namespace {

RunConfig micro_config() {
  return RunConfig::from_string(R"(
data.vocab = 8
data.videos = 5
data.frames = 16
data.height = 4
data.width = 4
data.channels = 2
data.events_per_video = 2
data.distractors = 1
data.noise = 0.3
data.seed = 13
model.d = 8
model.backbone_widths = [4, 8, 8]
model.strided_blocks = [0]
model.insertion_points = [1, 2]
model.gamma = 4
head.anchor_scales = [2, 4]
train.batch_size = 4
train.epochs = 1
train.seed = 13
)");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

#ifdef TSG_BIN
int run_cli(const std::string& args) {
  std::string cmd = std::string(TSG_BIN) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}
#endif

}  // namespace

TEST_CASE("train writes config, checkpoint and log; reload reproduces predictions") {
  RunConfig cfg = micro_config();
  Dataset ds = generate(cfg.data);
  fs::path dir = fs::temp_directory_path() / "tsg_pipeline_train";
  fs::remove_all(dir);

  auto model = train_model(cfg, ds, dir.string());
  CHECK(fs::exists(dir / "config.toml"));
  CHECK(fs::exists(dir / "checkpoint.scg1"));
  CHECK(fs::exists(dir / "train_log.csv"));

  auto preds_live = predict_all(*model, ds, 5);
  auto reloaded = load_model(dir.string());
  auto preds_reload = predict_all(*reloaded, ds, 5);
  REQUIRE(preds_live.size() == preds_reload.size());
  for (size_t i = 0; i < preds_live.size(); ++i) {
    REQUIRE(preds_live[i].ranked.size() == preds_reload[i].ranked.size());
    for (size_t j = 0; j < preds_live[i].ranked.size(); ++j) {
      CHECK(preds_live[i].ranked[j].segment.start == preds_reload[i].ranked[j].segment.start);
      CHECK(preds_live[i].ranked[j].score == preds_reload[i].ranked[j].score);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("zero epochs leaves the checkpoint at initialization") {
  RunConfig cfg = micro_config();
  cfg.epochs = 0;
  Dataset ds = generate(cfg.data);
  fs::path dir = fs::temp_directory_path() / "tsg_pipeline_e0";
  fs::remove_all(dir);
  train_model(cfg, ds, dir.string());

  GroundingModel fresh(cfg.model_config(), cfg.train_seed);
  auto entries = load_checkpoint((dir / "checkpoint.scg1").string());
  restore_parameters(entries, fresh.parameters());
  GroundingModel fresh2(cfg.model_config(), cfg.train_seed);
  for (size_t i = 0; i < fresh.parameters().size(); ++i) {
    const auto& a = fresh.parameters()[i].tensor;
    const auto& b = fresh2.parameters()[i].tensor;
    CHECK(std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(double)) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("training log carries per-step losses and per-epoch counters") {
  RunConfig cfg = micro_config();
  cfg.epochs = 2;
  Dataset ds = generate(cfg.data);
  fs::path dir = fs::temp_directory_path() / "tsg_pipeline_log";
  fs::remove_all(dir);
  train_model(cfg, ds, dir.string());

  std::ifstream is(dir / "train_log.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "record,epoch,step,boundary,iou,offset,total,backbone_forwards,pair_forwards");
  int steps = 0, epochs = 0;
  while (std::getline(is, line)) {
    if (line.rfind("step,", 0) == 0) ++steps;
    if (line.rfind("epoch,", 0) == 0) ++epochs;
  }
  CHECK(steps > 0);
  CHECK(epochs == 2);
  fs::remove_all(dir);
}

TEST_CASE("a diverging run aborts naming the offending step") {
  RunConfig cfg = micro_config();
  cfg.lr = 1e154;  // parameter products overflow on the next forward
  cfg.epochs = 3;
  Dataset ds = generate(cfg.data);
  fs::path dir = fs::temp_directory_path() / "tsg_pipeline_nan";
  fs::remove_all(dir);
  try {
    train_model(cfg, ds, dir.string());
    FAIL("expected a non-finite loss abort");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("an untrained model scores near the random-ranking baseline") {
  RunConfig cfg = micro_config();
  Dataset ds = generate(cfg.data);
  GroundingModel model(cfg.model_config(), 99);
  auto preds = predict_all(model, ds, 5);
  double untrained = rank_n_at_iou(preds, dataset_targets(ds), 1, 0.5, true);

  // brute-force oracle: expected Rank1@0.5 when anchors are ranked at random
  const auto& anchors = model.anchors_for(cfg.data.frames).anchors;
  double expect = 0;
  for (const auto& q : ds.queries) {
    int good = 0;
    for (const auto& a : anchors)
      if (temporal_iou(a, q.target) > 0.5) ++good;
    expect += static_cast<double>(good) / static_cast<double>(anchors.size());
  }
  expect *= 100.0 / static_cast<double>(ds.queries.size());
  CHECK(std::abs(untrained - expect) < 15.0);
}

TEST_CASE("ablation report has 4 variants x 3 seeds x 5 metrics with flag-only diffs") {
  RunConfig cfg = micro_config();
  cfg.epochs = 0;  // structure check only
  Dataset ds = generate(cfg.data);
  fs::path dir = fs::temp_directory_path() / "tsg_pipeline_ablate";
  fs::remove_all(dir);

  AblationReport report = ablate(cfg, ds, dir.string());
  REQUIRE(report.variants.size() == 4);
  CHECK(report.variants[0].name == "frozen_baseline");
  CHECK(report.variants[1].name == "e2e_scada");
  CHECK(report.variants[2].name == "scada_text_free");
  CHECK(report.variants[3].name == "scada_with_text");
  for (const auto& v : report.variants) {
    CHECK(v.seeds == std::vector<uint64_t>{13, 14, 15});
    CHECK(v.per_seed.size() == 3);
  }
  CHECK(fs::exists(dir / "report.json"));

  // variant configs differ only in the documented flags
  auto diff_keys = [](const std::string& a, const std::string& b) {
    std::vector<std::string> keys;
    std::istringstream ia(a), ib(b);
    std::string la, lb;
    while (std::getline(ia, la) && std::getline(ib, lb))
      if (la != lb) keys.push_back(la.substr(0, la.find(" =")));
    return keys;
  };
  CHECK(diff_keys(report.variants[0].config, report.variants[1].config) ==
        std::vector<std::string>{"model.frozen_backbone", "model.use_adapters"});
  CHECK(diff_keys(report.variants[2].config, report.variants[3].config) ==
        std::vector<std::string>{"model.text_free"});
  CHECK(diff_keys(report.variants[1].config, report.variants[3].config) ==
        std::vector<std::string>{"model.frozen_backbone"});
  fs::remove_all(dir);
}

#ifdef TSG_BIN

TEST_CASE("cli: gen-data is byte-deterministic and respects --force") {
  fs::path cfg_path = fs::temp_directory_path() / "tsg_cli_cfg.toml";
  std::ofstream(cfg_path) << micro_config().serialize();
  fs::path d1 = fs::temp_directory_path() / "tsg_cli_data1";
  fs::path d2 = fs::temp_directory_path() / "tsg_cli_data2";
  fs::remove_all(d1);
  fs::remove_all(d2);

  CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " + d1.string()) == 0);
  CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " + d2.string()) == 0);
  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(!slurp(d1 / "manifest.json").empty());
  CHECK(slurp(d1 / "vid_0000") == slurp(d2 / "vid_0000"));
  CHECK(!slurp(d1 / "vid_0000").empty());

  // refuses to overwrite without --force (config error), succeeds with it
  CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " + d1.string()) == 2);
  CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " + d1.string() +
                " --force") == 0);

  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove(cfg_path);
}

TEST_CASE("cli: bad configs exit 2, train/predict/eval round-trip works") {
  fs::path bad = fs::temp_directory_path() / "tsg_cli_bad.toml";
  std::ofstream(bad) << "data.vidoes = 10\n";
  fs::path out = fs::temp_directory_path() / "tsg_cli_badrun";
  CHECK(run_cli("train --config " + bad.string() + " --data /nonexistent --out " +
                out.string() + " --force") == 2);
  fs::remove(bad);

  fs::path cfg_path = fs::temp_directory_path() / "tsg_cli_cfg2.toml";
  std::ofstream(cfg_path) << micro_config().serialize();
  fs::path data = fs::temp_directory_path() / "tsg_cli_data3";
  fs::path run = fs::temp_directory_path() / "tsg_cli_run";
  fs::path preds = fs::temp_directory_path() / "tsg_cli_preds.jsonl";
  fs::path metrics1 = fs::temp_directory_path() / "tsg_cli_m1.json";
  fs::path metrics2 = fs::temp_directory_path() / "tsg_cli_m2.json";
  fs::remove_all(data);
  fs::remove_all(run);

  CHECK(run_cli("gen-data --config " + cfg_path.string() + " --out " + data.string()) == 0);
  CHECK(run_cli("train --config " + cfg_path.string() + " --data " + data.string() +
                " --out " + run.string() + " --force") == 0);
  CHECK(run_cli("predict --run " + run.string() + " --data " + data.string() + " --out " +
                preds.string()) == 0);
  CHECK(run_cli("eval --run " + run.string() + " --data " + data.string() + " --out " +
                metrics1.string()) == 0);
  CHECK(run_cli("eval --run " + run.string() + " --data " + data.string() +
                " --predictions " + preds.string() + " --out " + metrics2.string()) == 0);
  CHECK(slurp(metrics1) == slurp(metrics2));
  CHECK(!slurp(metrics1).empty());

  // evaluating the same checkpoint twice is identical
  fs::path metrics3 = fs::temp_directory_path() / "tsg_cli_m3.json";
  CHECK(run_cli("eval --run " + run.string() + " --data " + data.string() + " --out " +
                metrics3.string()) == 0);
  CHECK(slurp(metrics1) == slurp(metrics3));

  fs::remove_all(data);
  fs::remove_all(run);
  fs::remove(cfg_path);
  fs::remove(preds);
  fs::remove(metrics1);
  fs::remove(metrics2);
  fs::remove(metrics3);
}

TEST_CASE("cli: ground-truth predictions score 100 everywhere") {
  fs::path cfg_path = fs::temp_directory_path() / "tsg_cli_cfg4.toml";
  std::ofstream(cfg_path) << micro_config().serialize();
  fs::path data = fs::temp_directory_path() / "tsg_cli_data4";
  fs::remove_all(data);
  REQUIRE(run_cli("gen-data --config " + cfg_path.string() + " --out " + data.string()) == 0);

  Dataset ds = load_dataset(data.string());
  std::vector<QueryPrediction> preds;
  for (const auto& q : ds.queries)
    preds.push_back({q.video_id, q.query_index, {{q.target, 1.0}}});
  MetricsReport m = evaluate(preds, dataset_targets(ds));
  CHECK(m.rank1_iou05 == doctest::Approx(100.0));
  CHECK(m.rank1_iou07 == doctest::Approx(100.0));
  CHECK(m.rank5_iou05 == doctest::Approx(100.0));
  CHECK(m.rank5_iou07 == doctest::Approx(100.0));
  CHECK(m.miou == doctest::Approx(100.0));

  fs::remove_all(data);
  fs::remove(cfg_path);
}

#endif  // TSG_BIN
