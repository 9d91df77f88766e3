#include "tsg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "tsg/errors.hpp"

namespace tsg {

namespace {

using RawValue = std::variant<bool, int64_t, double, std::string,
                              std::vector<int64_t>, std::vector<std::string>>;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

RawValue parse_scalar(const std::string& tok, int line_no) {
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
    return tok.substr(1, tok.size() - 2);
  if (tok.find_first_of(".eE") != std::string::npos) {
    try {
      size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (...) {
      throw ConfigError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
  }
  int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw ConfigError("line " + std::to_string(line_no) + ": bad value '" + tok + "'");
  return v;
}

RawValue parse_value(const std::string& raw, int line_no) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']')
      throw ConfigError("line " + std::to_string(line_no) + ": unterminated array");
    std::string body = trim(raw.substr(1, raw.size() - 2));
    std::vector<int64_t> ints;
    std::vector<std::string> strs;
    bool is_str = false;
    if (!body.empty()) {
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        RawValue v = parse_scalar(trim(item), line_no);
        if (std::holds_alternative<std::string>(v)) {
          is_str = true;
          strs.push_back(std::get<std::string>(v));
        } else if (std::holds_alternative<int64_t>(v)) {
          ints.push_back(std::get<int64_t>(v));
        } else {
          throw ConfigError("line " + std::to_string(line_no) +
                            ": arrays hold integers or strings only");
        }
      }
    }
    if (is_str) {
      if (!ints.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": mixed array types");
      return strs;
    }
    return ints;
  }
  return parse_scalar(raw, line_no);
}

std::map<std::string, RawValue> parse_toml(const std::string& text) {
  std::map<std::string, RawValue> out;
  std::istringstream is(text);
  std::string line, prefix;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": bad table header");
      prefix = trim(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!prefix.empty()) key = prefix + "." + key;
    if (out.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out[key] = parse_value(trim(s.substr(eq + 1)), line_no);
  }
  return out;
}

// typed accessors -----------------------------------------------------------

int64_t as_int(const RawValue& v, const std::string& key) {
  if (auto p = std::get_if<int64_t>(&v)) return *p;
  throw ConfigError("key '" + key + "' must be an integer");
}

double as_double(const RawValue& v, const std::string& key) {
  if (auto p = std::get_if<double>(&v)) return *p;
  if (auto p = std::get_if<int64_t>(&v)) return static_cast<double>(*p);
  throw ConfigError("key '" + key + "' must be a number");
}

bool as_bool(const RawValue& v, const std::string& key) {
  if (auto p = std::get_if<bool>(&v)) return *p;
  throw ConfigError("key '" + key + "' must be true or false");
}

std::vector<int> as_int_list(const RawValue& v, const std::string& key) {
  if (auto p = std::get_if<std::vector<int64_t>>(&v)) {
    std::vector<int> out;
    for (int64_t x : *p) out.push_back(static_cast<int>(x));
    return out;
  }
  throw ConfigError("key '" + key + "' must be an integer array");
}

std::vector<std::string> as_str_list(const RawValue& v, const std::string& key) {
  if (auto p = std::get_if<std::vector<std::string>>(&v)) return *p;
  if (auto p = std::get_if<std::vector<int64_t>>(&v); p && p->empty()) return {};
  throw ConfigError("key '" + key + "' must be a string array");
}

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  return s + "]";
}

std::string fmt_str_list(const std::vector<std::string>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += "\"" + v[i] + "\"";
  }
  return s + "]";
}

}  // namespace

RunConfig RunConfig::from_string(const std::string& text) {
  auto values = parse_toml(text);
  RunConfig cfg;
  auto take = [&](const std::string& key, auto&& apply) {
    auto it = values.find(key);
    if (it != values.end()) {
      apply(it->second);
      values.erase(it);
    }
  };

  take("data.vocab", [&](const RawValue& v) { cfg.data.vocab = static_cast<int>(as_int(v, "data.vocab")); });
  take("data.videos", [&](const RawValue& v) { cfg.data.videos = static_cast<int>(as_int(v, "data.videos")); });
  take("data.frames", [&](const RawValue& v) { cfg.data.frames = static_cast<int>(as_int(v, "data.frames")); });
  take("data.height", [&](const RawValue& v) { cfg.data.height = static_cast<int>(as_int(v, "data.height")); });
  take("data.width", [&](const RawValue& v) { cfg.data.width = static_cast<int>(as_int(v, "data.width")); });
  take("data.channels", [&](const RawValue& v) { cfg.data.channels = static_cast<int>(as_int(v, "data.channels")); });
  take("data.events_per_video", [&](const RawValue& v) { cfg.data.events_per_video = static_cast<int>(as_int(v, "data.events_per_video")); });
  take("data.distractors", [&](const RawValue& v) { cfg.data.distractors = static_cast<int>(as_int(v, "data.distractors")); });
  take("data.noise", [&](const RawValue& v) { cfg.data.noise = as_double(v, "data.noise"); });
  take("data.seed", [&](const RawValue& v) { cfg.data.seed = static_cast<uint64_t>(as_int(v, "data.seed")); });

  take("model.d", [&](const RawValue& v) { cfg.d = static_cast<int>(as_int(v, "model.d")); });
  take("model.backbone_widths", [&](const RawValue& v) { cfg.backbone_widths = as_int_list(v, "model.backbone_widths"); });
  take("model.strided_blocks", [&](const RawValue& v) { cfg.strided_blocks = as_int_list(v, "model.strided_blocks"); });
  take("model.insertion_points", [&](const RawValue& v) { cfg.insertion_points = as_int_list(v, "model.insertion_points"); });
  take("model.gamma", [&](const RawValue& v) { cfg.gamma = static_cast<int>(as_int(v, "model.gamma")); });
  take("model.beta", [&](const RawValue& v) { cfg.beta = static_cast<int>(as_int(v, "model.beta")); });
  take("model.dwconv_kernel", [&](const RawValue& v) { cfg.dwconv_kernel = static_cast<int>(as_int(v, "model.dwconv_kernel")); });
  take("model.use_adapters", [&](const RawValue& v) { cfg.use_adapters = as_bool(v, "model.use_adapters"); });
  take("model.text_free", [&](const RawValue& v) { cfg.text_free = as_bool(v, "model.text_free"); });
  take("model.frozen_backbone", [&](const RawValue& v) { cfg.frozen_backbone = as_bool(v, "model.frozen_backbone"); });

  take("head.anchor_scales", [&](const RawValue& v) { cfg.anchor_scales = as_int_list(v, "head.anchor_scales"); });
  take("loss.positive_iou", [&](const RawValue& v) { cfg.positive_iou = as_double(v, "loss.positive_iou"); });

  take("train.batch_size", [&](const RawValue& v) { cfg.batch_size = static_cast<int>(as_int(v, "train.batch_size")); });
  take("train.max_queries_per_video", [&](const RawValue& v) { cfg.max_queries_per_video = static_cast<int>(as_int(v, "train.max_queries_per_video")); });
  take("train.epochs", [&](const RawValue& v) { cfg.epochs = static_cast<int>(as_int(v, "train.epochs")); });
  take("train.lr", [&](const RawValue& v) { cfg.lr = as_double(v, "train.lr"); });
  take("train.weight_decay", [&](const RawValue& v) { cfg.weight_decay = as_double(v, "train.weight_decay"); });
  take("train.seed", [&](const RawValue& v) { cfg.train_seed = static_cast<uint64_t>(as_int(v, "train.seed")); });
  take("train.augment_image", [&](const RawValue& v) { cfg.augment_image = as_str_list(v, "train.augment_image"); });
  take("train.augment_text", [&](const RawValue& v) { cfg.augment_text = as_str_list(v, "train.augment_text"); });

  take("eval.strict_threshold", [&](const RawValue& v) { cfg.strict_threshold = as_bool(v, "eval.strict_threshold"); });

  if (!values.empty())
    throw ConfigError("unknown config key '" + values.begin()->first + "'");
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "data.channels = " << data.channels << "\n";
  os << "data.distractors = " << data.distractors << "\n";
  os << "data.events_per_video = " << data.events_per_video << "\n";
  os << "data.frames = " << data.frames << "\n";
  os << "data.height = " << data.height << "\n";
  os << "data.noise = " << fmt_double(data.noise) << "\n";
  os << "data.seed = " << data.seed << "\n";
  os << "data.videos = " << data.videos << "\n";
  os << "data.vocab = " << data.vocab << "\n";
  os << "data.width = " << data.width << "\n";
  os << "eval.strict_threshold = " << (strict_threshold ? "true" : "false") << "\n";
  os << "head.anchor_scales = " << fmt_int_list(anchor_scales) << "\n";
  os << "loss.positive_iou = " << fmt_double(positive_iou) << "\n";
  os << "model.backbone_widths = " << fmt_int_list(backbone_widths) << "\n";
  os << "model.beta = " << beta << "\n";
  os << "model.d = " << d << "\n";
  os << "model.dwconv_kernel = " << dwconv_kernel << "\n";
  os << "model.frozen_backbone = " << (frozen_backbone ? "true" : "false") << "\n";
  os << "model.gamma = " << gamma << "\n";
  os << "model.insertion_points = " << fmt_int_list(insertion_points) << "\n";
  os << "model.strided_blocks = " << fmt_int_list(strided_blocks) << "\n";
  os << "model.text_free = " << (text_free ? "true" : "false") << "\n";
  os << "model.use_adapters = " << (use_adapters ? "true" : "false") << "\n";
  os << "train.augment_image = " << fmt_str_list(augment_image) << "\n";
  os << "train.augment_text = " << fmt_str_list(augment_text) << "\n";
  os << "train.batch_size = " << batch_size << "\n";
  os << "train.epochs = " << epochs << "\n";
  os << "train.lr = " << fmt_double(lr) << "\n";
  os << "train.max_queries_per_video = " << max_queries_per_video << "\n";
  os << "train.seed = " << train_seed << "\n";
  os << "train.weight_decay = " << fmt_double(weight_decay) << "\n";
  return os.str();
}

void RunConfig::validate() const {
  if (data.vocab <= 0 || data.videos <= 0 || data.frames <= 0 || data.height <= 0 ||
      data.width <= 0 || data.channels <= 0 || data.events_per_video <= 0)
    throw ConfigError("data.* values must be positive");
  if (data.distractors < 0 || data.noise < 0)
    throw ConfigError("data.distractors and data.noise must be non-negative");
  if (d <= 0) throw ConfigError("model.d must be positive");
  if (backbone_widths.empty() || backbone_widths.back() != d)
    throw ConfigError("model.backbone_widths must end at model.d");
  if (gamma <= 0 || d % gamma != 0)
    throw ConfigError("model.gamma must divide model.d");
  if (beta <= 0) throw ConfigError("model.beta must be positive");
  if (dwconv_kernel <= 0 || dwconv_kernel % 2 == 0)
    throw ConfigError("model.dwconv_kernel must be odd and positive");
  for (int ip : insertion_points)
    if (ip < 0 || ip >= static_cast<int>(backbone_widths.size()))
      throw ConfigError("model.insertion_points outside the backbone");
  for (size_t i = 1; i < insertion_points.size(); ++i)
    if (insertion_points[i] <= insertion_points[i - 1])
      throw ConfigError("model.insertion_points must be strictly increasing");
  if (anchor_scales.empty()) throw ConfigError("head.anchor_scales must be non-empty");
  for (int s : anchor_scales)
    if (s <= 0) throw ConfigError("head.anchor_scales must be positive");
  if (positive_iou <= 0 || positive_iou >= 1)
    throw ConfigError("loss.positive_iou must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_queries_per_video < 1)
    throw ConfigError("train.max_queries_per_video must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (lr <= 0) throw ConfigError("train.lr must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  for (const auto& s : augment_image) img_aug_from_string(s);
  for (const auto& s : augment_text) text_aug_from_string(s);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.vocab = data.vocab;
  m.d = d;
  m.input_channels = data.channels;
  m.backbone_widths = backbone_widths;
  m.strided_blocks = strided_blocks;
  m.insertion_points = insertion_points;
  m.gamma = gamma;
  m.beta = beta;
  m.dwconv_kernel = dwconv_kernel;
  m.use_adapters = use_adapters;
  m.text_free = text_free;
  m.frozen_backbone = frozen_backbone;
  m.anchor_scales = anchor_scales;
  return m;
}

}  // namespace tsg
