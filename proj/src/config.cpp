#include "sfpp/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace sfpp {

void RunConfig::finalize() {
  exp.train.seed = seed;
  exp.init_seed = seed;
  exp.model.anchor_count = exp.anchors.count();
  exp.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  N v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename N>
std::string fmt_list(const std::vector<N>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + (std::is_integral_v<N> ? std::to_string(v[i]) : fmt(double(v[i])));
  return out;
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  auto add = [&](std::string name, std::string help, auto member) {
    // member(cfg) returns a reference to the field.
    using Field = std::remove_reference_t<decltype(member(std::declval<RunConfig&>()))>;
    ConfigKey k;
    k.name = name;
    k.help = std::move(help);
    k.get = [member](const RunConfig& c) -> std::string {
      const Field& f = member(const_cast<RunConfig&>(c));
      if constexpr (std::is_same_v<Field, bool>) return f ? "true" : "false";
      else if constexpr (std::is_same_v<Field, std::string>) return f;
      else if constexpr (std::is_integral_v<Field>) return std::to_string(f);
      else if constexpr (std::is_floating_point_v<Field>) return fmt(f);
      else if constexpr (std::is_same_v<Field, std::vector<std::string>>) {
        std::string out;
        for (size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
        return out;
      } else return fmt_list(f);
    };
    k.set = [member, name](RunConfig& c, const std::string& v) {
      Field& f = member(c);
      if constexpr (std::is_same_v<Field, bool>) f = parse_bool(name, v);
      else if constexpr (std::is_same_v<Field, std::string>) f = trim(v);
      else if constexpr (std::is_integral_v<Field> || std::is_floating_point_v<Field>) f = parse_number<Field>(name, v);
      else if constexpr (std::is_same_v<Field, std::vector<std::string>>) f = split_list(v);
      else {
        Field out;
        for (const auto& item : split_list(v)) out.push_back(parse_number<typename Field::value_type>(name, item));
        f = out;
      }
    };
    keys.push_back(std::move(k));
  };
  auto add_enum = [&](std::string name, std::string help, auto get, auto set) {
    keys.push_back(ConfigKey{std::move(name), std::move(help), get, set});
  };

  add("run.seed", "seed for model init and pair sampling (env SFPP_SEED overrides)",
      [](RunConfig& c) -> auto& { return c.seed; });

  add("world.seed", "seed of the synthetic world", [](RunConfig& c) -> auto& { return c.exp.world.seed; });
  add("world.train_sequences", "training sequences", [](RunConfig& c) -> auto& { return c.exp.world.train_sequences; });
  add("world.test_sequences", "held-out sequences", [](RunConfig& c) -> auto& { return c.exp.world.test_sequences; });
  add("world.sequence_length", "frames per sequence", [](RunConfig& c) -> auto& { return c.exp.world.sequence_length; });
  add("world.frame_size", "frame side in pixels", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.frame_size; });
  add("world.translation_sigma", "velocity noise, px per frame",
      [](RunConfig& c) -> auto& { return c.exp.world.dynamics.translation_sigma; });
  add("world.velocity_decay", "velocity persistence", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.velocity_decay; });
  add("world.scale_sigma", "log-area random-walk step", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.scale_sigma; });
  add("world.ratio_sigma", "log-aspect random-walk step", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.ratio_sigma; });
  add("world.distractors", "distractor objects per frame", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.distractors; });
  add("world.min_size", "minimum object side", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.min_size; });
  add("world.max_size", "maximum object side", [](RunConfig& c) -> auto& { return c.exp.world.dynamics.max_size; });

  add("model.backbone_channels", "conv1..conv4 output channels",
      [](RunConfig& c) -> auto& { return c.exp.model.backbone_channels; });
  add("model.template_size", "template patch side", [](RunConfig& c) -> auto& { return c.exp.model.template_size; });
  add("model.search_size", "search patch side", [](RunConfig& c) -> auto& { return c.exp.model.search_size; });
  add("model.head_tower_depth", "3x3 conv layers per head tower",
      [](RunConfig& c) -> auto& { return c.exp.model.head_tower_depth; });
  add("model.crop_border", "template feature border cropped before correlation",
      [](RunConfig& c) -> auto& { return c.exp.model.crop_border; });
  add_enum("model.quality_mode", "quality branch target: pss, iou or none",
           [](const RunConfig& c) { return to_string(c.exp.model.quality_mode); },
           [](RunConfig& c, const std::string& v) { c.exp.model.quality_mode = parse_quality_mode(trim(v)); });
  add_enum("model.head_kind", "per_pixel or anchor",
           [](const RunConfig& c) { return to_string(c.exp.model.head_kind); },
           [](RunConfig& c, const std::string& v) { c.exp.model.head_kind = parse_head_kind(trim(v)); });
  add_enum("model.backbone_init", "he or gaussian",
           [](const RunConfig& c) { return to_string(c.exp.model.backbone_init); },
           [](RunConfig& c, const std::string& v) { c.exp.model.backbone_init = parse_backbone_init(trim(v)); });
  add("model.init_std", "std of the Gaussian head init", [](RunConfig& c) -> auto& { return c.exp.model.init_std; });

  add("loss.lambda", "weight of the regression and quality terms",
      [](RunConfig& c) -> auto& { return c.exp.loss.lambda_weight; });
  add("loss.focal_gamma", "focal loss gamma", [](RunConfig& c) -> auto& { return c.exp.loss.focal_gamma; });
  add("loss.focal_alpha", "focal loss alpha", [](RunConfig& c) -> auto& { return c.exp.loss.focal_alpha; });
  add("loss.n_pos_floor", "lower bound of the positive-count normalizer",
      [](RunConfig& c) -> auto& { return c.exp.loss.n_pos_floor; });

  add("train.base_lr", "peak learning rate", [](RunConfig& c) -> auto& { return c.exp.train.base_lr; });
  add("train.warmup_start_lr", "learning rate at step 0", [](RunConfig& c) -> auto& { return c.exp.train.warmup_start_lr; });
  add("train.warmup_epochs", "linear warmup epochs", [](RunConfig& c) -> auto& { return c.exp.train.warmup_epochs; });
  add("train.total_epochs", "total epochs", [](RunConfig& c) -> auto& { return c.exp.train.total_epochs; });
  add("train.pairs_per_epoch", "training pairs per epoch", [](RunConfig& c) -> auto& { return c.exp.train.pairs_per_epoch; });
  add("train.momentum", "SGD momentum", [](RunConfig& c) -> auto& { return c.exp.train.momentum; });
  add("train.batch_size", "pairs per step", [](RunConfig& c) -> auto& { return c.exp.train.batch_size; });
  add("train.freeze", "comma-separated parameter-name prefixes kept fixed",
      [](RunConfig& c) -> auto& { return c.exp.train.freeze; });

  add("sampler.max_interval", "max frame gap between template and search",
      [](RunConfig& c) -> auto& { return c.exp.sampler.max_interval; });
  add("sampler.max_shift", "search crop shift jitter, patch px", [](RunConfig& c) -> auto& { return c.exp.sampler.max_shift; });
  add("sampler.scale_range", "search crop scale jitter", [](RunConfig& c) -> auto& { return c.exp.sampler.scale_range; });
  add("sampler.negative_ratio", "fraction of negative pairs", [](RunConfig& c) -> auto& { return c.exp.sampler.negative_ratio; });

  add("track.k", "scale/ratio penalty strength", [](RunConfig& c) -> auto& { return c.exp.track.k; });
  add("track.window_influence", "cosine window weight", [](RunConfig& c) -> auto& { return c.exp.track.window_influence; });
  add("track.size_lr", "size update rate", [](RunConfig& c) -> auto& { return c.exp.track.size_lr; });
  add_enum("track.window_mode", "standard_hann or paper_literal",
           [](const RunConfig& c) { return to_string(c.exp.track.window_mode); },
           [](RunConfig& c, const std::string& v) { c.exp.track.window_mode = parse_window_mode(trim(v)); });
  add_enum("track.penalty_mode", "normalized or paper_literal",
           [](const RunConfig& c) { return to_string(c.exp.track.penalty_mode); },
           [](RunConfig& c, const std::string& v) { c.exp.track.penalty_mode = parse_penalty_mode(trim(v)); });
  add_enum("track.size_def", "padded_sqrt or area",
           [](const RunConfig& c) { return to_string(c.exp.track.size_def); },
           [](RunConfig& c, const std::string& v) { c.exp.track.size_def = parse_size_def(trim(v)); });
  add("track.use_quality", "multiply the quality score into selection",
      [](RunConfig& c) -> auto& { return c.exp.track.use_quality; });
  add("track.context", "context amount around the target", [](RunConfig& c) -> auto& { return c.exp.track.context; });
  add("track.min_size", "minimum box side in pixels", [](RunConfig& c) -> auto& { return c.exp.track.min_size; });

  add("anchor.ratios", "anchor aspect ratios (w/h)", [](RunConfig& c) -> auto& { return c.exp.anchors.ratios; });
  add("anchor.scales", "anchor scales", [](RunConfig& c) -> auto& { return c.exp.anchors.scales; });
  add("anchor.base_size", "anchor side at scale 1, patch px", [](RunConfig& c) -> auto& { return c.exp.anchors.base_size; });
  add("anchor.positive_iou", "IoU at or above which an anchor is positive",
      [](RunConfig& c) -> auto& { return c.exp.anchors.positive_iou; });
  add("anchor.negative_iou", "IoU below which an anchor is negative",
      [](RunConfig& c) -> auto& { return c.exp.anchors.negative_iou; });

  add("eval.failure_iou", "frames with IoU at or below this count as failures in score histograms",
      [](RunConfig& c) -> auto& { return c.exp.failure_iou; });
  return keys;
}

const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_key(RunConfig& cfg, const std::string& name, const std::string& value) {
  find_key(name).set(cfg, value);
}

std::string get_config_key(const RunConfig& cfg, const std::string& name) { return find_key(name).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string section;
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any [section]");
    try {
      set_config_key(cfg, section + "." + key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

void apply_environment(RunConfig& cfg) {
  if (const char* s = std::getenv("SFPP_SEED"); s && *s) {
    try {
      set_config_key(cfg, "run.seed", s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("SFPP_SEED: ") + e.what());
    }
  }
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << k.name.substr(dot + 1) << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace sfpp
