#include "tsg/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tsg/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsg {

namespace {
constexpr uint64_t kTemplateStream = 0x7e4d5041;  // template patterns
constexpr uint64_t kVideoStream = 0x76696430;     // per-video noise/events

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }
}  // namespace

bool segment_valid(const MomentSegment& m, double total_frames) {
  return m.start >= 0.0 && m.start < m.end && m.end <= total_frames;
}

std::vector<double> token_template(const SynthConfig& cfg, int token) {
  Rng rng = Rng::stream(cfg.seed, kTemplateStream, static_cast<uint64_t>(token));
  std::vector<double> t(static_cast<size_t>(cfg.channels) * cfg.height * cfg.width);
  for (auto& v : t) v = round_f32(rng.uniform(-1.0, 1.0));
  return t;
}

std::map<int, int> make_synonym_map(int vocab) {
  // Pairs (d, d+1) inside the distractor half so replacement never touches
  // a token that can key an event.
  std::map<int, int> syn;
  const int event_vocab = vocab / 2;
  for (int a = event_vocab; a + 1 < vocab; a += 2) {
    syn[a] = a + 1;
    syn[a + 1] = a;
  }
  return syn;
}

Dataset generate(const SynthConfig& cfg) {
  if (cfg.vocab <= 0 || cfg.videos <= 0 || cfg.frames <= 0 || cfg.height <= 0 ||
      cfg.width <= 0 || cfg.channels <= 0 || cfg.events_per_video <= 0 ||
      cfg.distractors < 0 || cfg.noise < 0)
    throw ConfigError("synthetic config fields must be positive");
  const int event_vocab = cfg.vocab / 2;
  if (cfg.vocab < cfg.events_per_video + cfg.distractors ||
      cfg.events_per_video > event_vocab ||
      cfg.distractors > cfg.vocab - event_vocab)
    throw ConfigError("vocabulary of " + std::to_string(cfg.vocab) +
                      " is too small for " + std::to_string(cfg.events_per_video) +
                      " events per video plus " + std::to_string(cfg.distractors) +
                      " distractors");

  const int min_len = std::max(4, cfg.frames / 16);
  const int max_len = std::max(min_len, cfg.frames / 4);
  if (min_len > cfg.frames)
    throw ConfigError("videos of " + std::to_string(cfg.frames) +
                      " frames are too short to plant events");

  Dataset ds;
  ds.vocab = cfg.vocab;
  ds.event_vocab = event_vocab;
  ds.frames = cfg.frames;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.channels = cfg.channels;
  ds.synonyms = make_synonym_map(cfg.vocab);

  std::vector<std::vector<double>> templates(static_cast<size_t>(event_vocab));
  for (int tok = 0; tok < event_vocab; ++tok) templates[static_cast<size_t>(tok)] = token_template(cfg, tok);

  const int64_t plane = static_cast<int64_t>(cfg.height) * cfg.width;
  const int64_t frame_stride = static_cast<int64_t>(cfg.frames) * plane;

  for (int vi = 0; vi < cfg.videos; ++vi) {
    Rng rng = Rng::stream(cfg.seed, kVideoStream, static_cast<uint64_t>(vi));
    VideoSample v;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "vid_%04d", vi);
    v.id = idbuf;

    // distinct event tokens for this video
    std::vector<int> pool(static_cast<size_t>(event_vocab));
    for (int i = 0; i < event_vocab; ++i) pool[static_cast<size_t>(i)] = i;
    rng.shuffle(pool);
    pool.resize(static_cast<size_t>(cfg.events_per_video));

    // non-overlapping segments: draw lengths, then scatter the leftover
    // frames over the gaps between events
    std::vector<int> lengths(static_cast<size_t>(cfg.events_per_video));
    int total_len = 0;
    for (auto& len : lengths) {
      len = min_len + static_cast<int>(rng.range(static_cast<uint64_t>(max_len - min_len + 1)));
      total_len += len;
    }
    if (total_len > cfg.frames)
      throw ConfigError("cannot place " + std::to_string(cfg.events_per_video) +
                        " non-overlapping events in " + std::to_string(cfg.frames) +
                        " frames");
    std::vector<int> gaps(static_cast<size_t>(cfg.events_per_video) + 1, 0);
    for (int slack = cfg.frames - total_len; slack > 0; --slack)
      gaps[static_cast<size_t>(rng.range(gaps.size()))] += 1;
    int cursor = 0;
    for (int e = 0; e < cfg.events_per_video; ++e) {
      cursor += gaps[static_cast<size_t>(e)];
      MomentSegment seg{static_cast<double>(cursor),
                        static_cast<double>(cursor + lengths[static_cast<size_t>(e)])};
      cursor += lengths[static_cast<size_t>(e)];
      v.events.push_back({pool[static_cast<size_t>(e)], seg});
    }

    // noise background plus active templates, rounded to f32
    v.frames = Tensor::zeros({cfg.channels, cfg.frames, cfg.height, cfg.width});
    double* px = v.frames.data();
    for (int64_t i = 0; i < v.frames.numel(); ++i) px[i] = cfg.noise * rng.normal();
    for (const auto& ev : v.events) {
      const std::vector<double>& tpl = templates[static_cast<size_t>(ev.token)];
      for (int c = 0; c < cfg.channels; ++c)
        for (int t = static_cast<int>(ev.segment.start); t < static_cast<int>(ev.segment.end); ++t) {
          double* dst = px + c * frame_stride + t * plane;
          const double* src = tpl.data() + c * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    for (int64_t i = 0; i < v.frames.numel(); ++i) px[i] = round_f32(px[i]);

    // 1..events_per_video queries over distinct events
    int n_queries = 1 + static_cast<int>(rng.range(static_cast<uint64_t>(cfg.events_per_video)));
    std::vector<int> order(static_cast<size_t>(cfg.events_per_video));
    for (int i = 0; i < cfg.events_per_video; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    for (int qi = 0; qi < n_queries; ++qi) {
      const PlantedEvent& ev = v.events[static_cast<size_t>(order[static_cast<size_t>(qi)])];
      QuerySample q;
      q.video_id = v.id;
      q.video_index = vi;
      q.query_index = qi;
      q.target = ev.segment;
      q.tokens.push_back(ev.token);
      for (int d = 0; d < cfg.distractors; ++d)
        q.tokens.push_back(event_vocab +
                           static_cast<int>(rng.range(static_cast<uint64_t>(cfg.vocab - event_vocab))));
      rng.shuffle(q.tokens);
      ds.queries.push_back(std::move(q));
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

ImgAug img_aug_from_string(const std::string& s) {
  if (s == "crop") return ImgAug::crop;
  if (s == "hflip") return ImgAug::hflip;
  if (s == "rotate90") return ImgAug::rotate90;
  if (s == "photometric") return ImgAug::photometric;
  throw ConfigError("unknown image augmentation '" + s + "'");
}

TextAug text_aug_from_string(const std::string& s) {
  if (s == "swap") return TextAug::swap;
  if (s == "insert") return TextAug::insert;
  if (s == "replace") return TextAug::replace;
  throw ConfigError("unknown text augmentation '" + s + "'");
}

namespace {
void frame_dims(const Tensor& frames, int64_t& c, int64_t& t, int64_t& h, int64_t& w) {
  if (frames.rank() != 4)
    throw DimensionError("expected frames [c,t,h,w], got " + shape_str(frames.shape()));
  c = frames.dim(0);
  t = frames.dim(1);
  h = frames.dim(2);
  w = frames.dim(3);
}
}  // namespace

Tensor crop_resize(const Tensor& frames, int64_t y0, int64_t x0, int64_t ch, int64_t cw) {
  int64_t c, t, h, w;
  frame_dims(frames, c, t, h, w);
  if (ch > h || cw > w)
    throw ConfigError("crop window " + std::to_string(ch) + "x" + std::to_string(cw) +
                      " exceeds frame " + std::to_string(h) + "x" + std::to_string(w));
  if (y0 < 0 || x0 < 0 || y0 + ch > h || x0 + cw > w)
    throw ConfigError("crop window out of bounds");
  Tensor out = Tensor::zeros(frames.shape());
  const double* src = frames.data();
  double* dst = out.data();
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ti = 0; ti < t; ++ti) {
      const double* sp = src + (ci * t + ti) * h * w;
      double* dp = dst + (ci * t + ti) * h * w;
      for (int64_t y = 0; y < h; ++y) {
        int64_t sy = y0 + y * ch / h;  // nearest-neighbour resize back
        for (int64_t x = 0; x < w; ++x) {
          int64_t sx = x0 + x * cw / w;
          dp[y * w + x] = sp[sy * w + sx];
        }
      }
    }
  return out;
}

Tensor hflip(const Tensor& frames) {
  int64_t c, t, h, w;
  frame_dims(frames, c, t, h, w);
  Tensor out = Tensor::zeros(frames.shape());
  const double* src = frames.data();
  double* dst = out.data();
  for (int64_t i = 0; i < c * t; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        dst[(i * h + y) * w + x] = src[(i * h + y) * w + (w - 1 - x)];
  return out;
}

Tensor rotate90(const Tensor& frames, int k) {
  int64_t c, t, h, w;
  frame_dims(frames, c, t, h, w);
  k = ((k % 4) + 4) % 4;
  if (k == 0) {
    Tensor out = Tensor::zeros(frames.shape());
    out.values() = frames.values();
    return out;
  }
  if (h != w && (k % 2) == 1)
    throw ConfigError("quarter-turn rotation requires square frames, got " +
                      std::to_string(h) + "x" + std::to_string(w));
  Tensor out = Tensor::zeros(frames.shape());
  const double* src = frames.data();
  double* dst = out.data();
  for (int64_t i = 0; i < c * t; ++i)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t sy, sx;
        switch (k) {
          case 1: sy = x; sx = h - 1 - y; break;           // 90 ccw
          case 2: sy = h - 1 - y; sx = w - 1 - x; break;   // 180
          default: sy = w - 1 - x; sx = y; break;          // 270
        }
        dst[(i * h + y) * w + x] = src[(i * h + sy) * w + sx];
      }
  return out;
}

Tensor photometric(const Tensor& frames, double a, double b) {
  Tensor out = Tensor::zeros(frames.shape());
  const double* src = frames.data();
  double* dst = out.data();
  for (int64_t i = 0; i < frames.numel(); ++i) dst[i] = a * src[i] + b;
  return out;
}

Tensor augment_image(const Tensor& frames, const std::set<ImgAug>& ops, uint64_t seed) {
  int64_t c, t, h, w;
  frame_dims(frames, c, t, h, w);
  Rng rng(seed);
  Tensor cur = frames;
  if (ops.count(ImgAug::crop)) {
    int64_t ch = std::max<int64_t>(1, (h * 4 + 2) / 5);  // 80% window
    int64_t cw = std::max<int64_t>(1, (w * 4 + 2) / 5);
    int64_t y0 = static_cast<int64_t>(rng.range(static_cast<uint64_t>(h - ch + 1)));
    int64_t x0 = static_cast<int64_t>(rng.range(static_cast<uint64_t>(w - cw + 1)));
    cur = crop_resize(cur, y0, x0, ch, cw);
  }
  if (ops.count(ImgAug::hflip)) {
    if (rng.uniform() < 0.5) cur = hflip(cur);
  }
  if (ops.count(ImgAug::rotate90)) {
    int k = static_cast<int>(rng.range(4));
    if (h != w && (k % 2) == 1) k = (k + 1) % 4;  // keep the lattice exact
    cur = rotate90(cur, k);
  }
  if (ops.count(ImgAug::photometric)) {
    double a = rng.uniform(0.8, 1.2);
    double b = rng.uniform(-0.1, 0.1);
    cur = photometric(cur, a, b);
  }
  return cur;
}

std::vector<int> augment_text(const std::vector<int>& tokens, TextAug kind,
                              const std::map<int, int>& synonym_map, int vocab,
                              uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out = tokens;
  switch (kind) {
    case TextAug::swap: {
      if (out.size() < 2) return out;
      size_t i = static_cast<size_t>(rng.range(out.size()));
      size_t j = static_cast<size_t>(rng.range(out.size() - 1));
      if (j >= i) ++j;
      std::swap(out[i], out[j]);
      return out;
    }
    case TextAug::insert: {
      size_t pos = static_cast<size_t>(rng.range(out.size() + 1));
      int tok = static_cast<int>(rng.range(static_cast<uint64_t>(vocab)));
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), tok);
      return out;
    }
    case TextAug::replace: {
      std::vector<size_t> candidates;
      for (size_t i = 0; i < out.size(); ++i)
        if (synonym_map.count(out[i])) candidates.push_back(i);
      if (candidates.empty()) return out;
      size_t i = candidates[static_cast<size_t>(rng.range(candidates.size()))];
      out[i] = synonym_map.at(out[i]);
      return out;
    }
  }
  return out;
}

void write_dataset(const std::string& dir, const Dataset& ds, bool force) {
  fs::path root(dir);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force)
      throw ConfigError("output directory " + dir + " is not empty (use --force)");
    fs::remove_all(root);
  }
  fs::create_directories(root);

  json manifest;
  manifest["vocab"] = ds.vocab;
  manifest["event_vocab"] = ds.event_vocab;
  manifest["frames"] = ds.frames;
  manifest["height"] = ds.height;
  manifest["width"] = ds.width;
  manifest["channels"] = ds.channels;
  json syn = json::array();
  for (const auto& [a, b] : ds.synonyms)
    if (a < b) syn.push_back({a, b});
  manifest["synonyms"] = syn;

  json videos = json::array();
  size_t qcursor = 0;
  for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
    const VideoSample& v = ds.videos[vi];
    json jv;
    jv["id"] = v.id;
    json evs = json::array();
    for (const auto& e : v.events)
      evs.push_back({e.token, static_cast<int64_t>(e.segment.start),
                     static_cast<int64_t>(e.segment.end)});
    jv["events"] = evs;
    json qs = json::array();
    while (qcursor < ds.queries.size() &&
           ds.queries[qcursor].video_index == static_cast<int>(vi)) {
      const QuerySample& q = ds.queries[qcursor];
      json jq;
      jq["tokens"] = q.tokens;
      jq["target"] = {static_cast<int64_t>(q.target.start),
                      static_cast<int64_t>(q.target.end)};
      qs.push_back(jq);
      ++qcursor;
    }
    jv["queries"] = qs;
    videos.push_back(jv);

    std::ofstream os(root / v.id, std::ios::binary);
    if (!os) throw InputError("cannot write video file for " + v.id);
    std::vector<float> buf(static_cast<size_t>(v.frames.numel()));
    for (int64_t i = 0; i < v.frames.numel(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(v.frames.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  manifest["videos"] = videos;

  std::ofstream os(root / "manifest.json");
  if (!os) throw InputError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  std::ifstream is(root / "manifest.json");
  if (!is) throw InputError("no manifest.json in " + dir);
  json manifest = json::parse(is);

  Dataset ds;
  ds.vocab = manifest.at("vocab").get<int>();
  ds.event_vocab = manifest.at("event_vocab").get<int>();
  ds.frames = manifest.at("frames").get<int>();
  ds.height = manifest.at("height").get<int>();
  ds.width = manifest.at("width").get<int>();
  ds.channels = manifest.at("channels").get<int>();
  for (const auto& pair : manifest.at("synonyms")) {
    int a = pair.at(0).get<int>();
    int b = pair.at(1).get<int>();
    ds.synonyms[a] = b;
    ds.synonyms[b] = a;
  }

  const int64_t count = static_cast<int64_t>(ds.channels) * ds.frames * ds.height * ds.width;
  int vi = 0;
  for (const auto& jv : manifest.at("videos")) {
    VideoSample v;
    v.id = jv.at("id").get<std::string>();
    for (const auto& je : jv.at("events")) {
      PlantedEvent e;
      e.token = je.at(0).get<int>();
      e.segment = {je.at(1).get<double>(), je.at(2).get<double>()};
      v.events.push_back(e);
    }

    std::ifstream vf(root / v.id, std::ios::binary);
    if (!vf) throw InputError("missing video tensor file for " + v.id);
    std::vector<float> buf(static_cast<size_t>(count));
    vf.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!vf) throw InputError("short read on video tensor file for " + v.id);
    v.frames = Tensor::zeros({ds.channels, ds.frames, ds.height, ds.width});
    for (int64_t i = 0; i < count; ++i)
      v.frames.data()[i] = static_cast<double>(buf[static_cast<size_t>(i)]);

    int qi = 0;
    for (const auto& jq : jv.at("queries")) {
      QuerySample q;
      q.video_id = v.id;
      q.video_index = vi;
      q.query_index = qi++;
      q.tokens = jq.at("tokens").get<std::vector<int>>();
      q.target = {jq.at("target").at(0).get<double>(), jq.at("target").at(1).get<double>()};
      ds.queries.push_back(std::move(q));
    }
    ds.videos.push_back(std::move(v));
    ++vi;
  }
  return ds;
}

}  // namespace tsg
