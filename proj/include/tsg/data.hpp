#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tsg/tensor.hpp"

namespace tsg {

// Half-open temporal interval in frame units.
struct MomentSegment {
  double start = 0;
  double end = 0;
  double length() const { return end - start; }
};

bool segment_valid(const MomentSegment& m, double total_frames);

struct PlantedEvent {
  int token = 0;
  MomentSegment segment;
};

struct VideoSample {
  std::string id;
  Tensor frames;  // [c0, T, H, W]
  std::vector<PlantedEvent> events;
};

struct QuerySample {
  std::string video_id;
  int video_index = 0;  // into the dataset's video list
  int query_index = 0;  // within the video
  std::vector<int> tokens;
  MomentSegment target;
};

struct SynthConfig {
  int vocab = 32;
  int videos = 200;
  int frames = 64;
  int height = 16;
  int width = 16;
  int channels = 4;
  int events_per_video = 2;
  int distractors = 3;
  double noise = 1.5;
  uint64_t seed = 7;
};

struct Dataset {
  int vocab = 0;
  int event_vocab = 0;  // tokens [0, event_vocab) can key events
  int frames = 0, height = 0, width = 0, channels = 0;
  std::map<int, int> synonyms;  // bijection between paired distractor tokens
  std::vector<VideoSample> videos;
  std::vector<QuerySample> queries;
};

// The per-token spatial pattern added inside an event's segment. Values
// are rounded to f32 so the on-disk tensors round-trip exactly.
std::vector<double> token_template(const SynthConfig& cfg, int token);

// Builds the synonym bijection over the distractor half of the vocabulary.
std::map<int, int> make_synonym_map(int vocab);

Dataset generate(const SynthConfig& cfg);

enum class ImgAug { crop, hflip, rotate90, photometric };
enum class TextAug { swap, insert, replace };
ImgAug img_aug_from_string(const std::string& s);
TextAug text_aug_from_string(const std::string& s);

// Deterministic primitives (used by the random wrapper and by tests).
Tensor crop_resize(const Tensor& frames, int64_t y0, int64_t x0, int64_t ch, int64_t cw);
Tensor hflip(const Tensor& frames);
Tensor rotate90(const Tensor& frames, int k);
Tensor photometric(const Tensor& frames, double a, double b);

// Applies the enabled ops in order crop, hflip, rotate90, photometric with
// choices drawn from seed. Never touches the temporal axis.
Tensor augment_image(const Tensor& frames, const std::set<ImgAug>& ops, uint64_t seed);

// swap / insert / replace; no-op when preconditions are unmet.
std::vector<int> augment_text(const std::vector<int>& tokens, TextAug kind,
                              const std::map<int, int>& synonym_map, int vocab,
                              uint64_t seed);

// Disk format: manifest.json plus one raw little-endian f32 tensor file per
// video, named by the video id.
void write_dataset(const std::string& dir, const Dataset& ds, bool force);
Dataset load_dataset(const std::string& dir);

}  // namespace tsg
