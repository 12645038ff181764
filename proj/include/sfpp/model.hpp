#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sfpp/autograd.hpp"
#include "sfpp/head.hpp"
#include "sfpp/target_codec.hpp"

namespace sfpp {

enum class HeadKind { kPerPixel, kAnchor };
enum class BackboneInit { kHe, kGaussian };

struct ModelConfig {
  // conv1, conv2, conv3, conv4 output channels.
  std::vector<int> backbone_channels{16, 32, 32, 32};
  int total_stride = 8;
  int template_size = 64;
  int search_size = 128;
  int head_tower_depth = 2;
  int crop_border = 0;
  QualityMode quality_mode = QualityMode::kPss;
  HeadKind head_kind = HeadKind::kPerPixel;
  int anchor_count = 3;
  BackboneInit backbone_init = BackboneInit::kHe;
  double init_std = 0.01;

  int feature_channels() const { return backbone_channels.back(); }
  int head_channels() const { return head_kind == HeadKind::kAnchor ? anchor_count : 1; }

  // Spatial side of one backbone output for an input of `size` pixels.
  static int backbone_extent(int size);
  // Score-map side N from shape propagation alone.
  int score_size() const;
  // Score grid placement: centered in the search patch.
  ScoreGeometry geometry() const;

  void validate() const;
};

std::string to_string(HeadKind k);
HeadKind parse_head_kind(const std::string& s);
std::string to_string(BackboneInit k);
BackboneInit parse_backbone_init(const std::string& s);

template <typename Scalar>
class ParameterSet {
 public:
  using TensorT = Tensor<Scalar>;

  void add(std::string name, TensorT value) {
    if (index_.count(name)) throw InvalidArgument("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const TensorT& at(const std::string& name) const { return entries_[lookup(name)].second; }
  TensorT& at(const std::string& name) { return entries_[lookup(name)].second; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<Other>());
    return out;
  }

  bool operator==(const ParameterSet& o) const { return entries_ == o.entries_; }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter " + name);
    return it->second;
  }

  std::vector<std::pair<std::string, TensorT>> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class Branch { kTemplate, kSearch };

// psi_cls(phi(.)) and psi_reg(phi(.)) of one patch.
template <typename V>
struct Features {
  V cls;
  V reg;
};

// Parameters bound onto one tape. Parameters matching a frozen prefix are
// bound as constants, so no gradient ever reaches them.
struct BoundParams {
  std::map<std::string, Var> vars;
  Var operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw InvalidArgument("parameter not bound: " + name);
    return it->second;
  }
  Var optional(const std::string& name) const {
    auto it = vars.find(name);
    return it == vars.end() ? Var{} : it->second;
  }
};

inline bool matches_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (!p.empty() && name.rfind(p, 0) == 0) return true;
  return false;
}

template <typename Scalar>
class SiamModel {
 public:
  using TensorT = Tensor<Scalar>;

  SiamModel() = default;
  SiamModel(ModelConfig cfg, ParameterSet<Scalar> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
  }

  static SiamModel init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  int score_size() const { return cfg_.score_size(); }
  ScoreGeometry geometry() const { return cfg_.geometry(); }

  template <typename Other>
  SiamModel<Other> cast() const {
    return SiamModel<Other>(cfg_, params_.template cast<Other>());
  }

  BoundParams bind(Tape<Scalar>& tape, const std::vector<std::string>& frozen = {}) const {
    BoundParams b;
    for (const auto& [name, t] : params_)
      b.vars[name] = matches_prefix(name, frozen) ? tape.constant(t) : tape.parameter(name, t);
    return b;
  }

  Var backbone(Tape<Scalar>& tape, const BoundParams& p, Var patch) const {
    Var x = relu(tape, conv(tape, p, "backbone.conv1", patch, 2, 1));
    x = maxpool2d(tape, x, 2);
    x = relu(tape, conv(tape, p, "backbone.conv2", x, 1, 1));
    x = relu(tape, conv(tape, p, "backbone.conv3", x, 2, 1));
    return conv(tape, p, "backbone.conv4", x, 1, 1);
  }

  Features<Var> embed(Tape<Scalar>& tape, const BoundParams& p, Var patch, Branch branch) const {
    const TensorT& v = tape.value(patch);
    const int expected = branch == Branch::kTemplate ? cfg_.template_size : cfg_.search_size;
    if (v.rank() != 3 || v.dim(0) != 3 || v.dim(1) != expected || v.dim(2) != expected)
      throw ShapeError(std::string(branch == Branch::kTemplate ? "template" : "search") +
                       " patch must be [3," + std::to_string(expected) + "," + std::to_string(expected) +
                       "], got " + shape_str(v.shape()));
    Var phi = backbone(tape, p, patch);
    if (branch == Branch::kTemplate) phi = crop_border(tape, phi, cfg_.crop_border);
    auto adjust = [&](const std::string& prefix) {
      Var y = relu(tape, conv(tape, p, prefix + ".conv1", phi, 1, 1));
      return conv(tape, p, prefix + ".conv2", y, 1, 1);
    };
    return {adjust("neck_cls"), adjust("neck_reg")};
  }

  HeadVars forward_heads(Tape<Scalar>& tape, const BoundParams& p, const Features<Var>& z,
                         const Features<Var>& x) const {
    Var corr_cls = xcorr_depthwise(tape, z.cls, x.cls);
    Var corr_reg = xcorr_depthwise(tape, z.reg, x.reg);
    auto tower = [&](const std::string& prefix, Var in) {
      for (int i = 0; i < cfg_.head_tower_depth; ++i)
        in = relu(tape, conv(tape, p, prefix + "." + std::to_string(i), in, 1, 1));
      return in;
    };
    Var tc = tower("tower_cls", corr_cls);
    Var tr = tower("tower_reg", corr_reg);
    const int n = tape.value(tc).dim(1);
    HeadVars out;
    out.cls = conv(tape, p, "head.cls", tc, 1, 0);
    out.reg = conv(tape, p, "head.reg", tr, 1, 0);
    if (cfg_.head_kind == HeadKind::kPerPixel) {
      out.cls = reshape(tape, out.cls, Shape{n, n});
      out.quality = reshape(tape, conv(tape, p, "head.quality", tc, 1, 0), Shape{n, n});
    }
    return out;
  }

  // Inference helpers on plain tensors.
  Features<TensorT> embed(const TensorT& patch, Branch branch) const {
    Tape<Scalar> tape;
    const BoundParams p = bind_constants(tape);
    Features<Var> f = embed(tape, p, tape.constant(patch), branch);
    return {tape.value(f.cls), tape.value(f.reg)};
  }

  HeadOutput<Scalar> forward_heads(const Features<TensorT>& z, const Features<TensorT>& x) const {
    Tape<Scalar> tape;
    const BoundParams p = bind_constants(tape);
    HeadVars h = forward_heads(tape, p, {tape.constant(z.cls), tape.constant(z.reg)},
                               {tape.constant(x.cls), tape.constant(x.reg)});
    HeadOutput<Scalar> out;
    out.cls = tape.value(h.cls);
    out.reg = tape.value(h.reg);
    if (h.quality.valid()) out.quality = tape.value(h.quality);
    return out;
  }

  HeadOutput<Scalar> forward(const Features<TensorT>& z, const TensorT& search_patch) const {
    return forward_heads(z, embed(search_patch, Branch::kSearch));
  }

 private:
  BoundParams bind_constants(Tape<Scalar>& tape) const {
    BoundParams b;
    for (const auto& [name, t] : params_) b.vars[name] = tape.constant(t);
    return b;
  }

  Var conv(Tape<Scalar>& tape, const BoundParams& p, const std::string& name, Var in, int stride,
           int pad) const {
    return conv2d(tape, in, p[name + ".weight"], p.optional(name + ".bias"), stride, pad);
  }

  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
};

// Layer table shared by init and the parameter-count helpers.
struct LayerSpec {
  std::string name;
  int cout, cin, k;
  bool head_layer;  // Gaussian(0, init_std) init regardless of backbone_init
};

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg);

template <typename Scalar>
SiamModel<Scalar> SiamModel<Scalar>::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> params;
  for (const LayerSpec& layer : layer_specs(cfg)) {
    const int fan_in = layer.cin * layer.k * layer.k;
    const double std = (layer.head_layer || cfg.backbone_init == BackboneInit::kGaussian)
                           ? cfg.init_std
                           : std::sqrt(2.0 / fan_in);
    std::normal_distribution<double> normal(0.0, std);
    TensorT w(Shape{layer.cout, layer.cin, layer.k, layer.k});
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = Scalar(normal(rng));
    params.add(layer.name + ".weight", std::move(w));
    params.add(layer.name + ".bias", TensorT(Shape{layer.cout}));
  }
  return SiamModel(cfg, std::move(params));
}

}  // namespace sfpp
