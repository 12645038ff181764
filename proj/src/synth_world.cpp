#include "sfpp/synth_world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sfpp/errors.hpp"

namespace sfpp {
namespace {

using Rgb = std::array<double, 3>;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Pattern selector in object-local coordinates (u, v) in [0,1).
bool texture_bit(int texture, double u, double v) {
  auto fract = [](double x) { return x - std::floor(x); };
  switch (texture) {
    case 0: return int(std::floor(v * 4)) % 2 == 0;
    case 1: return int(std::floor(u * 4)) % 2 == 0;
    case 2: return (int(std::floor(u * 3)) + int(std::floor(v * 3))) % 2 == 0;
    case 3: return int(std::floor((u + v) * 3)) % 2 == 0;
    case 4: return int(std::floor(std::hypot(u - 0.5, v - 0.5) * 6)) % 2 == 0;
    case 5: {
      const double du = fract(u * 3) - 0.5, dv = fract(v * 3) - 0.5;
      return du * du + dv * dv < 0.09;
    }
    case 6: return u < 0.5;
    default: return std::abs(u - 0.5) < 0.15 || std::abs(v - 0.5) < 0.15;
  }
}

Rgb random_color(std::mt19937_64& rng) {
  return {uniform(rng, 20, 235), uniform(rng, 20, 235), uniform(rng, 20, 235)};
}

struct ObjectState {
  double cx, cy, vx = 0, vy = 0;
  double log_area, log_ratio;
  int texture;
  bool ellipse;
  Rgb color_a, color_b;

  double width() const { return std::sqrt(std::exp(log_area + log_ratio)); }
  double height() const { return std::sqrt(std::exp(log_area - log_ratio)); }

  // Integer-aligned rendered extent; this is what the ground truth records.
  BBox box() const {
    const double w = std::round(width()), h = std::round(height());
    const double x0 = std::round(cx - 0.5 * w), y0 = std::round(cy - 0.5 * h);
    return {x0, y0, x0 + w, y0 + h};
  }
};

ObjectState spawn(std::mt19937_64& rng, const Dynamics& d, int texture) {
  ObjectState o{};
  const double w = uniform(rng, d.min_size + 2, d.max_size - 4);
  const double h = std::clamp(w * std::exp(uniform(rng, -0.4, 0.4)), d.min_size + 1, d.max_size - 1);
  o.log_area = std::log(w * h);
  o.log_ratio = std::log(w / h);
  const double margin = 0.5 * d.max_size + 2;
  o.cx = uniform(rng, margin, d.frame_size - margin);
  o.cy = uniform(rng, margin, d.frame_size - margin);
  o.texture = texture;
  o.ellipse = uniform(rng, 0, 1) < 0.5;
  o.color_a = random_color(rng);
  do {
    o.color_b = random_color(rng);
  } while (std::abs(o.color_a[0] - o.color_b[0]) + std::abs(o.color_a[1] - o.color_b[1]) +
               std::abs(o.color_a[2] - o.color_b[2]) < 150);
  return o;
}

void step(ObjectState& o, std::mt19937_64& rng, const Dynamics& d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  // Size first: geometric walks on area and aspect, steps that leave the
  // size bounds are reflected.
  const double da = d.scale_sigma * normal(rng), dr = d.ratio_sigma * normal(rng);
  ObjectState trial = o;
  trial.log_area += da;
  trial.log_ratio += dr;
  auto in_bounds = [&](const ObjectState& s) {
    return s.width() >= d.min_size && s.width() <= d.max_size && s.height() >= d.min_size &&
           s.height() <= d.max_size;
  };
  if (in_bounds(trial)) {
    o.log_area = trial.log_area;
    o.log_ratio = trial.log_ratio;
  } else {
    trial.log_area = o.log_area - da;
    trial.log_ratio = o.log_ratio - dr;
    if (in_bounds(trial)) {
      o.log_area = trial.log_area;
      o.log_ratio = trial.log_ratio;
    }
  }

  o.vx = d.velocity_decay * o.vx + d.translation_sigma * normal(rng);
  o.vy = d.velocity_decay * o.vy + d.translation_sigma * normal(rng);
  o.cx += o.vx;
  o.cy += o.vy;
  const double hw = 0.5 * o.width() + 2, hh = 0.5 * o.height() + 2;
  const double f = d.frame_size;
  if (o.cx < hw) { o.cx = 2 * hw - o.cx; o.vx = std::abs(o.vx); }
  if (o.cx > f - hw) { o.cx = 2 * (f - hw) - o.cx; o.vx = -std::abs(o.vx); }
  if (o.cy < hh) { o.cy = 2 * hh - o.cy; o.vy = std::abs(o.vy); }
  if (o.cy > f - hh) { o.cy = 2 * (f - hh) - o.cy; o.vy = -std::abs(o.vy); }
  o.cx = std::clamp(o.cx, hw, f - hw);
  o.cy = std::clamp(o.cy, hh, f - hh);
}

// Writes the object into a float canvas [3,H,W]; marks mask pixels if given.
void draw(const ObjectState& o, std::vector<double>& canvas, int size, Tensor<std::uint8_t>* mask) {
  const BBox b = o.box();
  const double w = b.width(), h = b.height();
  const int j0 = std::max(0, int(b.x0)), j1 = std::min(size, int(b.x1));
  const int i0 = std::max(0, int(b.y0)), i1 = std::min(size, int(b.y1));
  const std::size_t plane = std::size_t(size) * size;
  for (int i = i0; i < i1; ++i)
    for (int j = j0; j < j1; ++j) {
      const double u = (j + 0.5 - b.x0) / w, v = (i + 0.5 - b.y0) / h;
      if (o.ellipse) {
        const double du = (u - 0.5) * 2, dv = (v - 0.5) * 2;
        if (du * du + dv * dv > 1.0) continue;
      }
      const Rgb& c = texture_bit(o.texture, u, v) ? o.color_a : o.color_b;
      const std::size_t idx = std::size_t(i) * size + j;
      for (int ch = 0; ch < 3; ++ch) canvas[ch * plane + idx] = c[ch];
      if (mask) (*mask)(i, j) = 1;
    }
}

std::vector<double> render_background(std::mt19937_64& rng, int size) {
  const std::size_t plane = std::size_t(size) * size;
  std::vector<double> bg(3 * plane);
  const Rgb base = {uniform(rng, 60, 190), uniform(rng, 60, 190), uniform(rng, 60, 190)};
  const Rgb grad = {uniform(rng, -40, 40), uniform(rng, -40, 40), uniform(rng, -40, 40)};
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        bg[ch * plane + std::size_t(i) * size + j] = base[ch] + grad[ch] * (double(i + j) / (2.0 * size) - 0.5);
  // Static low-contrast clutter.
  const int clutter = 24;
  for (int k = 0; k < clutter; ++k) {
    const int w = uniform_int(rng, 4, 24), h = uniform_int(rng, 4, 24);
    const int x = uniform_int(rng, 0, size - w), y = uniform_int(rng, 0, size - h);
    const Rgb tint = {uniform(rng, -35, 35), uniform(rng, -35, 35), uniform(rng, -35, 35)};
    for (int ch = 0; ch < 3; ++ch)
      for (int i = y; i < y + h; ++i)
        for (int j = x; j < x + w; ++j) bg[ch * plane + std::size_t(i) * size + j] += tint[ch];
  }
  return bg;
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::array<float, 3> channel_means(const Frame& frame) {
  const Eigen::Index plane = Eigen::Index(frame.dim(1)) * frame.dim(2);
  std::array<float, 3> m{};
  for (int ch = 0; ch < 3; ++ch)
    m[ch] = float(frame.array().segment(ch * plane, plane).template cast<double>().mean());
  return m;
}

}  // namespace

Sequence gen_sequence(std::uint64_t seed, int length, const Dynamics& d, bool with_masks) {
  if (length < 2) throw InvalidArgument("gen_sequence: length must be >= 2");
  if (d.frame_size < 2 * d.max_size + 8) throw ConfigError("world.frame_size too small for world.max_size");
  if (!(d.min_size >= 4 && d.max_size > d.min_size + 8)) throw ConfigError("world size bounds invalid");
  std::mt19937_64 rng(splitmix(seed));
  Sequence seq;
  seq.seed = seed;
  seq.dynamics = d;

  const int size = d.frame_size;
  const std::vector<double> background = render_background(rng, size);
  ObjectState target = spawn(rng, d, uniform_int(rng, 0, kTextureCount - 1));
  seq.target_texture = target.texture;
  std::vector<ObjectState> distractors;
  for (int k = 0; k < d.distractors; ++k) {
    int tex = uniform_int(rng, 0, kTextureCount - 2);
    if (tex >= target.texture) ++tex;  // distractors use the other textures
    distractors.push_back(spawn(rng, d, tex));
  }

  std::normal_distribution<double> noise(0.0, 3.0);
  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      step(target, rng, d);
      for (auto& o : distractors) step(o, rng, d);
    }
    std::vector<double> canvas = background;
    for (const auto& o : distractors) draw(o, canvas, size, nullptr);
    Tensor<std::uint8_t> mask;
    if (with_masks) mask = Tensor<std::uint8_t>(Shape{size, size}, 0);
    draw(target, canvas, size, with_masks ? &mask : nullptr);

    Frame frame(Shape{3, size, size});
    for (Eigen::Index k = 0; k < frame.size(); ++k) frame[k] = quantize(canvas[std::size_t(k)] + noise(rng));
    seq.frames.push_back(std::move(frame));
    seq.gt.push_back(target.box());
    if (with_masks) seq.masks.push_back(std::move(mask));
  }
  return seq;
}

std::optional<BBox> mask_bbox(const Tensor<std::uint8_t>& mask) {
  int i0 = mask.dim(0), i1 = -1, j0 = mask.dim(1), j1 = -1;
  for (int i = 0; i < mask.dim(0); ++i)
    for (int j = 0; j < mask.dim(1); ++j)
      if (mask(i, j)) {
        i0 = std::min(i0, i);
        i1 = std::max(i1, i);
        j0 = std::min(j0, j);
        j1 = std::max(j1, j);
      }
  if (i1 < 0) return std::nullopt;
  return BBox{double(j0), double(i0), double(j1 + 1), double(i1 + 1)};
}

double context_side(const BBox& box, double context) {
  if (!box.valid()) throw InvalidArgument("crop: degenerate box");
  const double pad = context * (box.width() + box.height());
  return std::sqrt((box.width() + pad) * (box.height() + pad));
}

CroppedPatch crop_window(const Frame& frame, double cx, double cy, double side, int out_size) {
  if (out_size <= 0) throw InvalidArgument("crop: out_size must be positive");
  if (!(side > 0) || !std::isfinite(side)) throw InvalidArgument("crop: degenerate window");
  const int h = frame.dim(1), w = frame.dim(2);
  CroppedPatch out;
  out.transform = {cx - 0.5 * side, cy - 0.5 * side, out_size / side};
  out.image = Patch(Shape{3, out_size, out_size});
  const auto fill = channel_means(frame);
  const CropTransform& tf = out.transform;
  for (int i = 0; i < out_size; ++i) {
    const double y = tf.to_frame_y(i + 0.5);
    for (int j = 0; j < out_size; ++j) {
      const double x = tf.to_frame_x(j + 0.5);
      if (x < 0 || y < 0 || x >= w || y >= h) {
        for (int ch = 0; ch < 3; ++ch) out.image(ch, i, j) = fill[ch];
        continue;
      }
      const double fx = x - 0.5, fy = y - 0.5;
      const int xa = std::clamp(int(std::floor(fx)), 0, w - 1), ya = std::clamp(int(std::floor(fy)), 0, h - 1);
      const int xb = std::min(xa + 1, w - 1), yb = std::min(ya + 1, h - 1);
      const double ax = std::clamp(fx - xa, 0.0, 1.0), ay = std::clamp(fy - ya, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - ax) * frame(ch, ya, xa) + ax * frame(ch, ya, xb);
        const double bot = (1 - ax) * frame(ch, yb, xa) + ax * frame(ch, yb, xb);
        out.image(ch, i, j) = float((1 - ay) * top + ay * bot);
      }
    }
  }
  return out;
}

CroppedPatch crop_patch(const Frame& frame, const BBox& center_box, int out_size, double context,
                        double extent_ratio) {
  return crop_window(frame, center_box.cx(), center_box.cy(), context_side(center_box, context) * extent_ratio,
                     out_size);
}

namespace {

CroppedPatch search_crop(const Frame& frame, const BBox& box, const PairGeometry& g, const Jitter& jitter,
                         std::mt19937_64& rng) {
  const double ratio = double(g.search_size) / g.template_size;
  double side = context_side(box, g.context) * ratio;
  double dx = 0, dy = 0;
  if (jitter.scale_range > 0) side *= uniform(rng, 1 - jitter.scale_range, 1 + jitter.scale_range);
  if (jitter.max_shift > 0) {
    const double px_to_frame = side / g.search_size;
    dx = uniform(rng, -jitter.max_shift, jitter.max_shift) * px_to_frame;
    dy = uniform(rng, -jitter.max_shift, jitter.max_shift) * px_to_frame;
  }
  // Shifting the window by -d moves the object by +d inside the patch.
  return crop_window(frame, box.cx() - dx, box.cy() - dy, side, g.search_size);
}

}  // namespace

TrainingPair sample_pair(const Sequence& seq, int max_interval, std::mt19937_64& rng, const PairGeometry& g,
                         const Jitter& jitter) {
  const int n = int(seq.size());
  if (n < 2) throw InvalidArgument("sample_pair: sequence needs >= 2 frames");
  if (max_interval < 1) throw InvalidArgument("sample_pair: max_interval must be >= 1");
  const int i = uniform_int(rng, 0, n - 1);
  // Uniform over the frames within max_interval of i, excluding i itself.
  const int lo = std::max(0, i - max_interval), hi = std::min(n - 1, i + max_interval);
  int j = uniform_int(rng, lo, hi - 1);
  if (j >= i) ++j;

  TrainingPair pair;
  pair.template_frame = i;
  pair.search_frame = j;
  pair.template_patch = crop_patch(seq.frames[size_t(i)], seq.gt[size_t(i)], g.template_size, g.context).image;
  CroppedPatch search = search_crop(seq.frames[size_t(j)], seq.gt[size_t(j)], g, jitter, rng);
  pair.search_patch = std::move(search.image);
  pair.gt_in_search = search.transform.to_patch(seq.gt[size_t(j)]);
  return pair;
}

TrainingPair augment(const TrainingPair& pair, std::mt19937_64& rng, double max_shift, double scale_range) {
  const double dx = max_shift > 0 ? uniform(rng, -max_shift, max_shift) : 0.0;
  const double dy = max_shift > 0 ? uniform(rng, -max_shift, max_shift) : 0.0;
  const double s = scale_range > 0 ? uniform(rng, 1 - scale_range, 1 + scale_range) : 1.0;
  if (dx == 0 && dy == 0 && s == 1.0) return pair;

  const Patch& src = pair.search_patch;
  const int size = src.dim(1);
  const double c = 0.5 * size;
  Eigen::Index plane = Eigen::Index(size) * size;
  std::array<float, 3> fill{};
  for (int ch = 0; ch < 3; ++ch) fill[ch] = src.array().segment(ch * plane, plane).mean();

  TrainingPair out = pair;
  Patch& dst = out.search_patch;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      // new = (old - c) * s + c + d  =>  old = (new - c - d) / s + c
      const double x = (j + 0.5 - c - dx) / s + c, y = (i + 0.5 - c - dy) / s + c;
      if (x < 0 || y < 0 || x >= size || y >= size) {
        for (int ch = 0; ch < 3; ++ch) dst(ch, i, j) = fill[ch];
        continue;
      }
      const double fx = x - 0.5, fy = y - 0.5;
      const int xa = std::clamp(int(std::floor(fx)), 0, size - 1), ya = std::clamp(int(std::floor(fy)), 0, size - 1);
      const int xb = std::min(xa + 1, size - 1), yb = std::min(ya + 1, size - 1);
      const double ax = std::clamp(fx - xa, 0.0, 1.0), ay = std::clamp(fy - ya, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - ax) * src(ch, ya, xa) + ax * src(ch, ya, xb);
        const double bot = (1 - ax) * src(ch, yb, xa) + ax * src(ch, yb, xb);
        dst(ch, i, j) = float((1 - ay) * top + ay * bot);
      }
    }
  if (pair.gt_in_search) {
    const BBox& b = *pair.gt_in_search;
    auto map = [&](double v, double d) { return (v - c) * s + c + d; };
    out.gt_in_search = BBox{map(b.x0, dx), map(b.y0, dy), map(b.x1, dx), map(b.y1, dy)};
  }
  return out;
}

TrainingPair make_negative_pair(const Sequence& a, const Sequence& b, std::mt19937_64& rng, const PairGeometry& g,
                                const Jitter& jitter) {
  if (a.size() < 1 || b.size() < 1) throw InvalidArgument("make_negative_pair: empty sequence");
  const int i = uniform_int(rng, 0, int(a.size()) - 1);
  const int j = uniform_int(rng, 0, int(b.size()) - 1);
  TrainingPair pair;
  pair.is_negative = true;
  pair.template_frame = i;
  pair.search_frame = j;
  pair.template_patch = crop_patch(a.frames[size_t(i)], a.gt[size_t(i)], g.template_size, g.context).image;
  pair.search_patch = search_crop(b.frames[size_t(j)], b.gt[size_t(j)], g, jitter, rng).image;
  return pair;
}

PairSampler::PairSampler(const std::vector<Sequence>& pool, SamplerConfig cfg, PairGeometry geometry,
                         std::uint64_t seed)
    : pool_(pool), cfg_(cfg), geometry_(geometry), rng_(splitmix(seed ^ 0x5eedULL)) {
  if (pool_.empty()) throw InvalidArgument("PairSampler: empty sequence pool");
}

TrainingPair PairSampler::next() {
  const Jitter jitter{cfg_.max_shift, cfg_.scale_range};
  const int n = int(pool_.size());
  if (n >= 2 && uniform(rng_, 0, 1) < cfg_.negative_ratio) {
    const int a = uniform_int(rng_, 0, n - 1);
    int b = a;
    for (int tries = 0; tries < 32 && (b == a || pool_[size_t(b)].target_texture == pool_[size_t(a)].target_texture);
         ++tries)
      b = uniform_int(rng_, 0, n - 1);
    if (b != a) return make_negative_pair(pool_[size_t(a)], pool_[size_t(b)], rng_, geometry_, jitter);
  }
  const int k = uniform_int(rng_, 0, n - 1);
  return sample_pair(pool_[size_t(k)], cfg_.max_interval, rng_, geometry_, jitter);
}

std::vector<Sequence> make_pool(const WorldConfig& cfg, bool held_out) {
  const int count = held_out ? cfg.test_sequences : cfg.train_sequences;
  std::vector<Sequence> pool;
  pool.reserve(size_t(count));
  const std::uint64_t stream = splitmix(cfg.seed) ^ (held_out ? 0xabcdef1234567ULL : 0ULL);
  for (int k = 0; k < count; ++k)
    pool.push_back(gen_sequence(splitmix(stream + std::uint64_t(k)), cfg.sequence_length, cfg.dynamics));
  return pool;
}

ScaleRatioStats scale_ratio_stats(const std::vector<Sequence>& sequences, int bins) {
  ScaleRatioStats st;
  for (const auto& seq : sequences) {
    if (seq.gt.size() < 2) throw InvalidArgument("scale_ratio_stats: sequence needs >= 2 frames");
    for (std::size_t t = 0; t < seq.gt.size(); ++t) {
      const BBox& b = seq.gt[t];
      st.ratio.push_back(b.width() / b.height());
      if (t > 0) st.relative_scale.push_back(b.area() / seq.gt[t - 1].area());
    }
  }
  auto quantiles = [](std::vector<double> v, double* out) {
    std::sort(v.begin(), v.end());
    const double qs[5] = {0.05, 0.25, 0.5, 0.75, 0.95};
    for (int k = 0; k < 5; ++k) {
      const double pos = qs[k] * double(v.size() - 1);
      const std::size_t lo = std::size_t(std::floor(pos)), hi = std::min(lo + 1, v.size() - 1);
      out[k] = v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
    }
  };
  auto histogram = [bins](const std::vector<double>& v) {
    ScaleRatioStats::Histogram h;
    auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    h.lo = *mn;
    h.hi = *mx;
    if (h.hi - h.lo < 1e-12) {
      h.lo -= 0.5;
      h.hi += 0.5;
    }
    h.counts.assign(size_t(bins), 0);
    for (double x : v) {
      int k = int((x - h.lo) / (h.hi - h.lo) * bins);
      ++h.counts[size_t(std::clamp(k, 0, bins - 1))];
    }
    return h;
  };
  quantiles(st.relative_scale, st.scale_quantiles);
  quantiles(st.ratio, st.ratio_quantiles);
  st.scale_hist = histogram(st.relative_scale);
  st.ratio_hist = histogram(st.ratio);
  double mean = 0;
  for (double x : st.relative_scale) mean += x;
  mean /= double(st.relative_scale.size());
  for (double x : st.relative_scale) st.scale_variance += (x - mean) * (x - mean);
  st.scale_variance /= double(st.relative_scale.size());
  return st;
}

std::string ScaleRatioStats::to_csv() const {
  std::ostringstream os;
  os << "quantity,bin_lo,bin_hi,count\n";
  auto emit = [&](const char* name, const Histogram& h) {
    const int bins = int(h.counts.size());
    for (int k = 0; k < bins; ++k) {
      const double lo = h.lo + (h.hi - h.lo) * k / bins, hi = h.lo + (h.hi - h.lo) * (k + 1) / bins;
      os << name << ',' << lo << ',' << hi << ',' << h.counts[size_t(k)] << '\n';
    }
  };
  emit("relative_scale", scale_hist);
  emit("ratio", ratio_hist);
  const char* q[5] = {"q05", "q25", "q50", "q75", "q95"};
  for (int k = 0; k < 5; ++k) os << "relative_scale_" << q[k] << ",,," << scale_quantiles[k] << '\n';
  for (int k = 0; k < 5; ++k) os << "ratio_" << q[k] << ",,," << ratio_quantiles[k] << '\n';
  return os.str();
}

void write_ppm(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const int h = frame.dim(1), w = frame.dim(2);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<char> buf(std::size_t(w) * h * 3);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < 3; ++ch) buf[(std::size_t(i) * w + j) * 3 + ch] = char(frame(ch, i, j));
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    while (in) {
      const int c = in.peek();
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    in >> t;
    return t;
  };
  if (token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError(path.string() + ": unsupported PPM geometry");
  in.get();
  std::vector<char> buf(std::size_t(w) * h * 3);
  in.read(buf.data(), std::streamsize(buf.size()));
  if (in.gcount() != std::streamsize(buf.size())) throw FormatError(path.string() + ": truncated pixel data");
  Frame frame(Shape{3, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < 3; ++ch)
        frame(ch, i, j) = static_cast<std::uint8_t>(buf[(std::size_t(i) * w + j) * 3 + ch]);
  return frame;
}

namespace {
std::string frame_name(std::size_t t) {
  char name[32];
  std::snprintf(name, sizeof(name), "%05zu.ppm", t);
  return name;
}
}  // namespace

void save_sequence(const Sequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < seq.size(); ++t) write_ppm(seq.frames[t], dir / frame_name(t));
  std::ofstream gt(dir / "groundtruth.csv");
  if (!gt) throw IoError("cannot write " + (dir / "groundtruth.csv").string());
  gt << "frame_index,x0,y0,x1,y1\n";
  char line[160];
  for (std::size_t t = 0; t < seq.gt.size(); ++t) {
    const BBox& b = seq.gt[t];
    std::snprintf(line, sizeof(line), "%zu,%.3f,%.3f,%.3f,%.3f\n", t, b.x0, b.y0, b.x1, b.y1);
    gt << line;
  }
}

std::vector<BBox> load_groundtruth(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read " + csv.string());
  std::vector<BBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-')) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<double> v;
    while (std::getline(ls, field, ',')) {
      try {
        v.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw FormatError(csv.string() + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (v.size() < 5) throw FormatError(csv.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    if (std::size_t(v[0]) != boxes.size())
      throw FormatError(csv.string() + ":" + std::to_string(lineno) + ": frame index out of order");
    boxes.push_back({v[1], v[2], v[3], v[4]});
  }
  return boxes;
}

Sequence load_sequence(const std::filesystem::path& dir) {
  Sequence seq;
  seq.gt = load_groundtruth(dir / "groundtruth.csv");
  for (std::size_t t = 0; t < seq.gt.size(); ++t) seq.frames.push_back(read_ppm(dir / frame_name(t)));
  if (seq.frames.empty()) throw FormatError(dir.string() + ": empty sequence");
  return seq;
}

Tensor<float> normalize_patch(const Patch& patch) {
  return Tensor<float>(patch.shape(), ((patch.array() - 128.0f) / 64.0f).eval());
}

}  // namespace sfpp
