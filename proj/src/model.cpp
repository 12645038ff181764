#include "sfpp/model.hpp"

namespace sfpp {

std::string to_string(HeadKind k) { return k == HeadKind::kAnchor ? "anchor" : "per_pixel"; }

HeadKind parse_head_kind(const std::string& s) {
  if (s == "per_pixel") return HeadKind::kPerPixel;
  if (s == "anchor") return HeadKind::kAnchor;
  throw ConfigError("unknown head kind '" + s + "' (expected per_pixel or anchor)");
}

std::string to_string(BackboneInit k) { return k == BackboneInit::kHe ? "he" : "gaussian"; }

BackboneInit parse_backbone_init(const std::string& s) {
  if (s == "he") return BackboneInit::kHe;
  if (s == "gaussian") return BackboneInit::kGaussian;
  throw ConfigError("unknown backbone init '" + s + "' (expected he or gaussian)");
}

int ModelConfig::backbone_extent(int size) {
  auto strided = [](int e) { return (e - 1) / 2 + 1; };  // 3x3, stride 2, pad 1
  int e = strided(size);                                  // conv1
  e /= 2;                                                 // 2x2 max pool
  return strided(e);                                      // conv3; conv2/conv4 keep size
}

int ModelConfig::score_size() const {
  const int zt = backbone_extent(template_size) - 2 * crop_border;
  const int xs = backbone_extent(search_size);
  return xs - zt + 1;
}

ScoreGeometry ModelConfig::geometry() const {
  const int n = score_size();
  return {n, total_stride, 0.5 * (search_size - double(n - 1) * total_stride)};
}

void ModelConfig::validate() const {
  if (backbone_channels.size() != 4) throw ConfigError("model.backbone_channels needs exactly 4 entries");
  for (int c : backbone_channels)
    if (c < 1) throw ConfigError("model.backbone_channels entries must be positive");
  // conv1 (stride 2) x pool (2) x conv3 (stride 2)
  if (total_stride != 8) throw ConfigError("model.total_stride must equal the backbone stride product 8");
  if (head_tower_depth < 1 || head_tower_depth > 3) throw ConfigError("model.head_tower_depth must be in 1..3");
  if (crop_border < 0) throw ConfigError("model.crop_border must be >= 0");
  if (template_size < 8 || search_size < template_size)
    throw ConfigError("model sizes need search_size >= template_size >= 8");
  if (backbone_extent(template_size) - 2 * crop_border < 1)
    throw ConfigError("model.crop_border removes the whole template feature map");
  if (score_size() < 3) throw ConfigError("degenerate score map: N = " + std::to_string(score_size()) + " < 3");
  if (anchor_count < 1) throw ConfigError("model.anchor_count must be >= 1");
  if (!(init_std > 0)) throw ConfigError("model.init_std must be positive");
}

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
  const auto& c = cfg.backbone_channels;
  const int f = cfg.feature_channels();
  const int h = cfg.head_channels();
  std::vector<LayerSpec> layers{
      {"backbone.conv1", c[0], 3, 3, false},
      {"backbone.conv2", c[1], c[0], 3, false},
      {"backbone.conv3", c[2], c[1], 3, false},
      {"backbone.conv4", c[3], c[2], 3, false},
      {"neck_cls.conv1", f, f, 3, false},
      {"neck_cls.conv2", f, f, 3, false},
      {"neck_reg.conv1", f, f, 3, false},
      {"neck_reg.conv2", f, f, 3, false},
  };
  for (int i = 0; i < cfg.head_tower_depth; ++i) layers.push_back({"tower_cls." + std::to_string(i), f, f, 3, true});
  for (int i = 0; i < cfg.head_tower_depth; ++i) layers.push_back({"tower_reg." + std::to_string(i), f, f, 3, true});
  layers.push_back({"head.cls", h, f, 1, true});
  if (cfg.head_kind == HeadKind::kPerPixel) layers.push_back({"head.quality", 1, f, 1, true});
  layers.push_back({"head.reg", 4 * h, f, 1, true});
  return layers;
}

}  // namespace sfpp
