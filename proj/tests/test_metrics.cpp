#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "tsg/metrics.hpp"
#include "tsg/rng.hpp"

using namespace tsg;
namespace fs = std::filesystem;

namespace {

// Brute-force re-computation with explicit interval case analysis.
double iou_by_cases(const MomentSegment& a, const MomentSegment& b) {
  if (a.end <= b.start || b.end <= a.start) return 0.0;
  double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  double merged = std::max(a.end, b.end) - std::min(a.start, b.start);
  double gap = 0.0;  // overlapping, so no gap inside the hull
  return inter / (merged - gap);
}

struct RandomEvalSet {
  std::vector<QueryPrediction> preds;
  std::vector<MomentSegment> targets;
};

RandomEvalSet random_eval_set(Rng& rng, size_t queries, bool with_exact_half = false) {
  RandomEvalSet set;
  for (size_t q = 0; q < queries; ++q) {
    double ts = rng.uniform(0, 40);
    MomentSegment target{ts, ts + rng.uniform(2, 20)};
    QueryPrediction p;
    p.video_id = "vid_" + std::to_string(q / 3);
    p.query_index = static_cast<int>(q % 3);
    size_t n = rng.range(7);  // 0..6 predictions, including empty lists
    for (size_t i = 0; i < n; ++i) {
      double s = rng.uniform(0, 50);
      p.ranked.push_back({{s, s + rng.uniform(1, 25)}, rng.uniform(0, 1)});
    }
    if (with_exact_half && q == 0) {
      // top-1 with tIoU exactly 0.5 against the target
      p.ranked.insert(p.ranked.begin(),
                      {{target.start, target.start + target.length() / 2}, 1.0});
    }
    set.preds.push_back(std::move(p));
    set.targets.push_back(target);
  }
  return set;
}

double brute_force_rank(const RandomEvalSet& s, int n, double m, bool strict) {
  int hits = 0;
  for (size_t q = 0; q < s.preds.size(); ++q) {
    bool hit = false;
    for (size_t i = 0; i < s.preds[q].ranked.size() && i < static_cast<size_t>(n); ++i) {
      double iou = iou_by_cases(s.preds[q].ranked[i].segment, s.targets[q]);
      if (strict ? iou > m : iou >= m) hit = true;
    }
    hits += hit ? 1 : 0;
  }
  return 100.0 * hits / static_cast<double>(s.preds.size());
}

double brute_force_miou(const RandomEvalSet& s) {
  double acc = 0;
  for (size_t q = 0; q < s.preds.size(); ++q)
    if (!s.preds[q].ranked.empty())
      acc += iou_by_cases(s.preds[q].ranked[0].segment, s.targets[q]);
  return 100.0 * acc / static_cast<double>(s.preds.size());
}

}  // namespace

TEST_CASE("temporal_iou forced values") {
  CHECK(temporal_iou({2, 6}, {4, 8}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(temporal_iou({3, 9}, {3, 9}) == doctest::Approx(1.0));
  CHECK(temporal_iou({0, 2}, {5, 9}) == 0.0);
}

TEST_CASE("temporal_iou is symmetric and matches case analysis on 1000 pairs") {
  Rng rng(61);
  for (int i = 0; i < 1000; ++i) {
    double s1 = rng.uniform(0, 30), s2 = rng.uniform(0, 30);
    MomentSegment a{s1, s1 + rng.uniform(1, 15)};
    MomentSegment b{s2, s2 + rng.uniform(1, 15)};
    CHECK(temporal_iou(a, b) == temporal_iou(b, a));
    CHECK(temporal_iou(a, b) == doctest::Approx(iou_by_cases(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("rank@IoU uses a strict inequality") {
  // top-1 tIoUs 0.6, 0.4, 0.8, 0.5 at m=0.5: 0.5 is a miss
  std::vector<QueryPrediction> preds(4);
  std::vector<MomentSegment> targets(4, {0, 100});
  double ious[] = {0.6, 0.4, 0.8, 0.5};
  for (int i = 0; i < 4; ++i) {
    preds[static_cast<size_t>(i)].video_id = "v";
    preds[static_cast<size_t>(i)].query_index = i;
    preds[static_cast<size_t>(i)].ranked = {{{0, 100 * ious[i]}, 1.0}};
  }
  CHECK(rank_n_at_iou(preds, targets, 1, 0.5, true) == doctest::Approx(50.0));
  CHECK(rank_n_at_iou(preds, targets, 1, 0.5, false) == doctest::Approx(75.0));
}

TEST_CASE("a perfect rank-3 prediction lifts Rank5 but not Rank1") {
  std::vector<QueryPrediction> preds(3);
  std::vector<MomentSegment> targets(3, {10, 20});
  for (auto& p : preds)
    p.ranked = {{{0, 5}, 0.9}, {{30, 40}, 0.8}, {{10, 20}, 0.7}, {{50, 60}, 0.6}};
  CHECK(rank_n_at_iou(preds, targets, 5, 0.7, true) == doctest::Approx(100.0));
  CHECK(rank_n_at_iou(preds, targets, 1, 0.7, true) == doctest::Approx(0.0));
}

TEST_CASE("empty prediction lists count as misses with a warning") {
  std::vector<QueryPrediction> preds(2);
  preds[0].ranked = {{{0, 10}, 1.0}};
  std::vector<MomentSegment> targets(2, {0, 10});
  WarningLog wl;
  CHECK(rank_n_at_iou(preds, targets, 1, 0.5, true, &wl) == doctest::Approx(50.0));
  CHECK(!wl.empty());
}

TEST_CASE("mean IoU forced values") {
  std::vector<QueryPrediction> preds(2);
  std::vector<MomentSegment> targets{{0, 10}, {20, 30}};
  preds[0].ranked = {{{0, 10}, 1.0}};
  preds[1].ranked = {{{20, 30}, 1.0}};
  CHECK(mean_iou(preds, targets) == doctest::Approx(100.0));

  preds[0].ranked = {{{50, 60}, 1.0}};
  preds[1].ranked = {{{50, 60}, 1.0}};
  CHECK(mean_iou(preds, targets) == doctest::Approx(0.0));
}

TEST_CASE("rank and mean IoU equal brute force on 100 random evaluation sets") {
  Rng rng(67);
  for (int trial = 0; trial < 100; ++trial) {
    RandomEvalSet set = random_eval_set(rng, 5 + rng.range(20), trial % 3 == 0);
    for (int n : {1, 5}) {
      for (double m : {0.5, 0.7}) {
        double got = rank_n_at_iou(set.preds, set.targets, n, m, true);
        CHECK(std::abs(got - brute_force_rank(set, n, m, true)) < 1e-9);
      }
    }
    CHECK(std::abs(mean_iou(set.preds, set.targets) - brute_force_miou(set)) < 1e-9);
  }
}

TEST_CASE("rank@IoU is monotone in n and antitone in m") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    RandomEvalSet set = random_eval_set(rng, 12);
    double r1 = rank_n_at_iou(set.preds, set.targets, 1, 0.5, true);
    double r5 = rank_n_at_iou(set.preds, set.targets, 5, 0.5, true);
    double r1_hi = rank_n_at_iou(set.preds, set.targets, 1, 0.7, true);
    CHECK(r5 >= r1);
    CHECK(r1 >= r1_hi);
  }
}

TEST_CASE("metrics are invariant under query reordering") {
  Rng rng(73);
  RandomEvalSet set = random_eval_set(rng, 15);
  MetricsReport a = evaluate(set.preds, set.targets);

  std::vector<size_t> perm(set.preds.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  RandomEvalSet shuffled;
  for (size_t i : perm) {
    shuffled.preds.push_back(set.preds[i]);
    shuffled.targets.push_back(set.targets[i]);
  }
  MetricsReport b = evaluate(shuffled.preds, shuffled.targets);
  CHECK(a.rank1_iou05 == doctest::Approx(b.rank1_iou05));
  CHECK(a.rank5_iou07 == doctest::Approx(b.rank5_iou07));
  CHECK(a.miou == doctest::Approx(b.miou).epsilon(1e-12));
}

TEST_CASE("prediction JSONL round-trips") {
  Rng rng(79);
  RandomEvalSet set = random_eval_set(rng, 9);
  fs::path path = fs::temp_directory_path() / "tsg_preds_test.jsonl";
  write_predictions_jsonl(path.string(), set.preds);
  auto back = read_predictions_jsonl(path.string());
  REQUIRE(back.size() == set.preds.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].video_id == set.preds[i].video_id);
    CHECK(back[i].query_index == set.preds[i].query_index);
    REQUIRE(back[i].ranked.size() == set.preds[i].ranked.size());
    for (size_t j = 0; j < back[i].ranked.size(); ++j) {
      CHECK(back[i].ranked[j].segment.start == set.preds[i].ranked[j].segment.start);
      CHECK(back[i].ranked[j].score == set.preds[i].ranked[j].score);
    }
  }
  fs::remove(path);
}
