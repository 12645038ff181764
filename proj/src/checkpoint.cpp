#include "sfpp/checkpoint.hpp"

#include <cstring>
#include <map>

#include "binary_io.hpp"

namespace sfpp {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'P', 'P'};

struct Entry {
  Shape shape;  // empty = scalar
  std::vector<float> data;
};

void put_entry(io::Writer& w, const std::string& name, const Shape& shape, const float* data, std::size_t n) {
  w.put_string16(name);
  w.put<std::uint8_t>(std::uint8_t(shape.size()));
  for (int d : shape) w.put<std::uint32_t>(std::uint32_t(d));
  w.put_bytes(data, n * sizeof(float));
}

void put_scalar(io::Writer& w, const std::string& name, double v) {
  const float f = float(v);
  put_entry(w, name, {}, &f, 1);
}

float scalar_entry(const std::map<std::string, Entry>& entries, const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw FormatError("checkpoint: missing entry " + name);
  if (it->second.data.size() != 1) throw FormatError("checkpoint: entry " + name + " is not a scalar");
  return it->second.data[0];
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const ModelConfig& c = ckpt.config;
  const std::uint32_t count = 12 + std::uint32_t(ckpt.params.size() + ckpt.momentum.size());
  io::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(count);

  std::vector<float> channels(c.backbone_channels.begin(), c.backbone_channels.end());
  put_entry(w, "config/backbone_channels", Shape{int(channels.size())}, channels.data(), channels.size());
  put_scalar(w, "config/total_stride", c.total_stride);
  put_scalar(w, "config/template_size", c.template_size);
  put_scalar(w, "config/search_size", c.search_size);
  put_scalar(w, "config/head_tower_depth", c.head_tower_depth);
  put_scalar(w, "config/crop_border", c.crop_border);
  put_scalar(w, "config/quality_mode", int(c.quality_mode));
  put_scalar(w, "config/head_kind", int(c.head_kind));
  put_scalar(w, "config/anchor_count", c.anchor_count);
  put_scalar(w, "config/backbone_init", int(c.backbone_init));
  put_scalar(w, "config/init_std", c.init_std);
  put_scalar(w, "meta/step", double(ckpt.step));
  for (const auto& [name, t] : ckpt.params) put_entry(w, "param/" + name, t.shape(), t.data(), size_t(t.size()));
  for (const auto& [name, t] : ckpt.momentum)
    put_entry(w, "momentum/" + name, t.shape(), t.data(), size_t(t.size()));
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(path);
  if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) r.fail("bad magic (not a checkpoint)", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (supported: " +
               std::to_string(kCheckpointVersion) + ")",
           4);
  const auto count = r.get<std::uint32_t>("entry count");

  Checkpoint ckpt;
  std::map<std::string, Entry> meta;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.get_string16("entry name");
    const auto rank = r.get<std::uint8_t>("entry rank");
    Shape shape;
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      shape.push_back(int(r.get<std::uint32_t>("entry dim")));
      if (shape.back() <= 0) r.fail("non-positive dimension in entry " + name, at);
      n *= size_t(shape.back());
    }
    std::vector<float> data(n);
    std::memcpy(data.data(), r.take(n * sizeof(float), "entry data"), n * sizeof(float));

    auto tensor = [&] { return Tensor<float>(shape, Eigen::Map<Eigen::ArrayXf>(data.data(), Eigen::Index(n))); };
    if (name.rfind("param/", 0) == 0) {
      ckpt.params.add(name.substr(6), tensor());
    } else if (name.rfind("momentum/", 0) == 0) {
      ckpt.momentum.add(name.substr(9), tensor());
    } else if (name.rfind("config/", 0) == 0 || name.rfind("meta/", 0) == 0) {
      meta[name] = Entry{shape, std::move(data)};
    } else {
      r.fail("unknown entry '" + name + "'", at);
    }
  }
  if (!r.at_end()) r.fail("trailing bytes", r.offset());

  auto channels = meta.find("config/backbone_channels");
  if (channels == meta.end()) throw FormatError("checkpoint: missing entry config/backbone_channels");
  ModelConfig& c = ckpt.config;
  c.backbone_channels.assign(channels->second.data.begin(), channels->second.data.end());
  c.total_stride = int(scalar_entry(meta, "config/total_stride"));
  c.template_size = int(scalar_entry(meta, "config/template_size"));
  c.search_size = int(scalar_entry(meta, "config/search_size"));
  c.head_tower_depth = int(scalar_entry(meta, "config/head_tower_depth"));
  c.crop_border = int(scalar_entry(meta, "config/crop_border"));
  c.quality_mode = QualityMode(int(scalar_entry(meta, "config/quality_mode")));
  c.head_kind = HeadKind(int(scalar_entry(meta, "config/head_kind")));
  c.anchor_count = int(scalar_entry(meta, "config/anchor_count"));
  c.backbone_init = BackboneInit(int(scalar_entry(meta, "config/backbone_init")));
  c.init_std = scalar_entry(meta, "config/init_std");
  ckpt.step = std::int64_t(scalar_entry(meta, "meta/step"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid stored config: ") + e.what());
  }
  const auto reference = SiamModel<float>::init(c, 0).parameters();
  if (reference.size() != ckpt.params.size())
    throw FormatError("checkpoint: expected " + std::to_string(reference.size()) + " parameters, found " +
                      std::to_string(ckpt.params.size()));
  for (const auto& [name, t] : reference) {
    if (!ckpt.params.contains(name)) throw FormatError("checkpoint: missing parameter " + name);
    if (ckpt.params.at(name).shape() != t.shape())
      throw FormatError("checkpoint: parameter " + name + " has shape " + shape_str(ckpt.params.at(name).shape()) +
                        ", expected " + shape_str(t.shape()));
  }
  return ckpt;
}

}  // namespace sfpp
