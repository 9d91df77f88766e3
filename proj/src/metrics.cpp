#include "tsg/metrics.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace tsg {

double temporal_iou(const MomentSegment& a, const MomentSegment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {
void check_sizes(const std::vector<QueryPrediction>& predictions,
                 const std::vector<MomentSegment>& targets) {
  if (predictions.size() != targets.size())
    throw ContractError("evaluation: " + std::to_string(predictions.size()) +
                        " prediction lists vs " + std::to_string(targets.size()) +
                        " targets");
}
}  // namespace

double rank_n_at_iou(const std::vector<QueryPrediction>& predictions,
                     const std::vector<MomentSegment>& targets, int n, double m,
                     bool strict, WarningLog* wl) {
  check_sizes(predictions, targets);
  if (predictions.empty()) return 0.0;
  int64_t hits = 0;
  for (size_t q = 0; q < predictions.size(); ++q) {
    const auto& ranked = predictions[q].ranked;
    if (ranked.empty()) {
      warn(wl, "query " + predictions[q].video_id + "#" +
                   std::to_string(predictions[q].query_index) +
                   " has no predictions, counted as miss");
      continue;
    }
    const size_t top = std::min<size_t>(static_cast<size_t>(n), ranked.size());
    for (size_t i = 0; i < top; ++i) {
      const double iou = temporal_iou(ranked[i].segment, targets[q]);
      if (strict ? iou > m : iou >= m) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mean_iou(const std::vector<QueryPrediction>& predictions,
                const std::vector<MomentSegment>& targets, WarningLog* wl) {
  check_sizes(predictions, targets);
  if (predictions.empty()) return 0.0;
  double acc = 0.0;
  for (size_t q = 0; q < predictions.size(); ++q) {
    if (predictions[q].ranked.empty()) {
      warn(wl, "query " + predictions[q].video_id + "#" +
                   std::to_string(predictions[q].query_index) +
                   " has no predictions, contributes zero IoU");
      continue;
    }
    acc += temporal_iou(predictions[q].ranked[0].segment, targets[q]);
  }
  return 100.0 * acc / static_cast<double>(predictions.size());
}

MetricsReport evaluate(const std::vector<QueryPrediction>& predictions,
                       const std::vector<MomentSegment>& targets, bool strict,
                       WarningLog* wl) {
  MetricsReport r;
  r.rank1_iou05 = rank_n_at_iou(predictions, targets, 1, 0.5, strict, wl);
  r.rank1_iou07 = rank_n_at_iou(predictions, targets, 1, 0.7, strict, wl);
  r.rank5_iou05 = rank_n_at_iou(predictions, targets, 5, 0.5, strict, wl);
  r.rank5_iou07 = rank_n_at_iou(predictions, targets, 5, 0.7, strict, wl);
  r.miou = mean_iou(predictions, targets, wl);
  return r;
}

void write_predictions_jsonl(const std::string& path,
                             const std::vector<QueryPrediction>& predictions) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write predictions to " + path);
  for (const auto& p : predictions) {
    json rec;
    rec["video_id"] = p.video_id;
    rec["query_index"] = p.query_index;
    json arr = json::array();
    for (const auto& s : p.ranked) arr.push_back({s.segment.start, s.segment.end, s.score});
    rec["predictions"] = arr;
    os << rec.dump() << "\n";
  }
}

std::vector<QueryPrediction> read_predictions_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read predictions from " + path);
  std::vector<QueryPrediction> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    QueryPrediction p;
    p.video_id = rec.at("video_id").get<std::string>();
    p.query_index = rec.at("query_index").get<int>();
    for (const auto& s : rec.at("predictions"))
      p.ranked.push_back({{s.at(0).get<double>(), s.at(1).get<double>()}, s.at(2).get<double>()});
    out.push_back(std::move(p));
  }
  return out;
}

std::string metrics_to_json(const MetricsReport& r) {
  json j;
  j["rank1_iou05"] = r.rank1_iou05;
  j["rank1_iou07"] = r.rank1_iou07;
  j["rank5_iou05"] = r.rank5_iou05;
  j["rank5_iou07"] = r.rank5_iou07;
  j["miou"] = r.miou;
  return j.dump(2) + "\n";
}

}  // namespace tsg
