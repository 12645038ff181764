#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sfpp/box.hpp"
#include "sfpp/tensor.hpp"

namespace sfpp {

// 8-bit RGB frame, [3,H,W].
using Frame = Tensor<std::uint8_t>;
// Float patch in [0,255], [3,S,S].
using Patch = Tensor<float>;

inline constexpr int kTextureCount = 8;

struct Dynamics {
  int frame_size = 192;
  double translation_sigma = 2.0;  // px per frame, velocity noise
  double velocity_decay = 0.7;
  double scale_sigma = 0.02;  // log-area step
  double ratio_sigma = 0.02;  // log-aspect step
  int distractors = 2;
  double min_size = 20.0;
  double max_size = 48.0;
};

struct Sequence {
  std::vector<Frame> frames;
  std::vector<BBox> gt;
  // Per-frame target masks ([H,W], 1 = target pixel); filled only on request.
  std::vector<Tensor<std::uint8_t>> masks;
  std::uint64_t seed = 0;
  Dynamics dynamics;
  int target_texture = 0;

  std::size_t size() const { return frames.size(); }
};

Sequence gen_sequence(std::uint64_t seed, int length, const Dynamics& dynamics, bool with_masks = false);

// Bounding box of the nonzero mask pixels, in continuous coordinates.
std::optional<BBox> mask_bbox(const Tensor<std::uint8_t>& mask);

// Maps search-patch coordinates to frame coordinates and back:
// patch = (frame - origin) * scale.
struct CropTransform {
  double origin_x = 0, origin_y = 0;
  double scale = 1;

  double to_patch_x(double fx) const { return (fx - origin_x) * scale; }
  double to_patch_y(double fy) const { return (fy - origin_y) * scale; }
  double to_frame_x(double px) const { return px / scale + origin_x; }
  double to_frame_y(double py) const { return py / scale + origin_y; }
  BBox to_patch(const BBox& b) const {
    return {to_patch_x(b.x0), to_patch_y(b.y0), to_patch_x(b.x1), to_patch_y(b.y1)};
  }
  BBox to_frame(const BBox& b) const {
    return {to_frame_x(b.x0), to_frame_y(b.y0), to_frame_x(b.x1), to_frame_y(b.y1)};
  }
};

struct CroppedPatch {
  Patch image;
  CropTransform transform;
};

// Side of the square context window: sqrt((w + c(w+h)) (h + c(w+h))).
double context_side(const BBox& box, double context);

// Square crop centered on `center_box` with side context_side * extent_ratio,
// bilinearly resampled to out_size. Out-of-frame pixels take the per-channel
// frame mean.
CroppedPatch crop_patch(const Frame& frame, const BBox& center_box, int out_size, double context,
                        double extent_ratio = 1.0);

// Crop around an explicit window (center, side).
CroppedPatch crop_window(const Frame& frame, double cx, double cy, double side, int out_size);

struct TrainingPair {
  Patch template_patch;
  Patch search_patch;
  std::optional<BBox> gt_in_search;
  bool is_negative = false;
  int template_frame = -1, search_frame = -1;
};

struct PairGeometry {
  int template_size = 64;
  int search_size = 128;
  double context = 0.5;
};

struct Jitter {
  double max_shift = 0;    // search-patch pixels
  double scale_range = 0;  // crop side scaled by U[1 - r, 1 + r]
};

TrainingPair sample_pair(const Sequence& seq, int max_interval, std::mt19937_64& rng,
                         const PairGeometry& geometry = {}, const Jitter& jitter = {});

// Resamples the search patch: shift by U[-max_shift, max_shift] px and scale
// by U[1 - scale_range, 1 + scale_range] about the patch center.
TrainingPair augment(const TrainingPair& pair, std::mt19937_64& rng, double max_shift, double scale_range);

TrainingPair make_negative_pair(const Sequence& a, const Sequence& b, std::mt19937_64& rng,
                                const PairGeometry& geometry = {}, const Jitter& jitter = {});

struct SamplerConfig {
  int max_interval = 20;
  double max_shift = 24.0;
  double scale_range = 0.15;
  double negative_ratio = 0.1;
};

// Mixes positive pairs and negative pairs from a pool of sequences. Holds its
// own RNG; not shared across threads.
class PairSampler {
 public:
  PairSampler(const std::vector<Sequence>& pool, SamplerConfig cfg, PairGeometry geometry, std::uint64_t seed);
  TrainingPair next();

 private:
  const std::vector<Sequence>& pool_;
  SamplerConfig cfg_;
  PairGeometry geometry_;
  std::mt19937_64 rng_;
};

struct WorldConfig {
  std::uint64_t seed = 7;
  int train_sequences = 32;
  int test_sequences = 20;
  int sequence_length = 60;
  Dynamics dynamics;
};

// Train and held-out pools with disjoint seeds.
std::vector<Sequence> make_pool(const WorldConfig& cfg, bool held_out);

struct ScaleRatioStats {
  std::vector<double> relative_scale;  // s_T / s_{T-1}, s_T = w_T * h_T
  std::vector<double> ratio;           // w / h per frame
  struct Histogram {
    double lo = 0, hi = 0;
    std::vector<int> counts;
  };
  Histogram scale_hist, ratio_hist;
  double scale_quantiles[5]{};  // 5, 25, 50, 75, 95 %
  double ratio_quantiles[5]{};
  double scale_variance = 0;

  std::string to_csv() const;
};

ScaleRatioStats scale_ratio_stats(const std::vector<Sequence>& sequences, int bins = 20);

// Persistence: <dir>/NNNNN.ppm frames plus groundtruth.csv.
void save_sequence(const Sequence& seq, const std::filesystem::path& dir);
Sequence load_sequence(const std::filesystem::path& dir);
std::vector<BBox> load_groundtruth(const std::filesystem::path& csv);
void write_ppm(const Frame& frame, const std::filesystem::path& path);
Frame read_ppm(const std::filesystem::path& path);

// Maps [0,255] patches to network input scale.
Tensor<float> normalize_patch(const Patch& patch);

}  // namespace sfpp
