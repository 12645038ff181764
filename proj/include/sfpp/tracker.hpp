#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfpp/anchor.hpp"
#include "sfpp/model.hpp"
#include "sfpp/synth_world.hpp"

namespace sfpp {

enum class WindowMode { kStandardHann, kPaperLiteral };
enum class PenaltyMode { kNormalized, kPaperLiteral };
enum class SizeDef { kPaddedSqrt, kArea };

std::string to_string(WindowMode m);
std::string to_string(PenaltyMode m);
std::string to_string(SizeDef m);
WindowMode parse_window_mode(const std::string& s);
PenaltyMode parse_penalty_mode(const std::string& s);
SizeDef parse_size_def(const std::string& s);

struct PostprocConfig {
  double k = 0.04;                // penalty strength
  double window_influence = 0.3;  // Omega
  double size_lr = 0.4;           // alpha
  WindowMode window_mode = WindowMode::kStandardHann;
  PenaltyMode penalty_mode = PenaltyMode::kNormalized;
  SizeDef size_def = SizeDef::kPaddedSqrt;
  bool use_quality = true;  // false: select on cls alone
  double context = 0.5;
  double min_size = 2.0;

  void validate() const;
};

// Candidates of one search patch, all in search-patch coordinates.
struct Candidates {
  Tensor<float> cls;      // [N,N] probabilities
  Tensor<float> quality;  // [N,N] probabilities; ones when the model has none
  Tensor<float> boxes;    // [4,N,N] x0,y0,x1,y1
  // Anchor variant only: winning anchor box per cell, [4,N,N].
  std::optional<Tensor<float>> anchors;
  int patch_size = 0;  // search-patch side in pixels
};

// What the tracker needs from a model: a template embedding computed once,
// and per-frame candidates for a search patch.
class ResponseModel {
 public:
  struct Template {
    Features<Tensor<float>> features;
  };
  struct SearchContext {
    int frame_index = 0;
    CropTransform transform;
  };

  virtual ~ResponseModel() = default;
  virtual PairGeometry geometry() const = 0;
  virtual Template encode_template(const Patch& patch) const = 0;
  virtual Candidates respond(const Template& z, const Patch& search, const SearchContext& ctx) const = 0;
};

class NetworkResponse : public ResponseModel {
 public:
  explicit NetworkResponse(SiamModel<float> model, AnchorConfig anchors = {});
  PairGeometry geometry() const override;
  Template encode_template(const Patch& patch) const override;
  Candidates respond(const Template& z, const Patch& search, const SearchContext& ctx) const override;
  const SiamModel<float>& model() const { return model_; }

 private:
  SiamModel<float> model_;
  AnchorConfig anchors_;
};

struct TrackerState {
  BBox prev_box;
  ResponseModel::Template templ;
  int frame_index = 0;
};

TrackerState init_tracker(const ResponseModel& model, const Frame& frame0, const BBox& gt0,
                          const PostprocConfig& cfg);

// Size measure used by the penalty.
double penalty_size(double w, double h, SizeDef def);

// Penalty for each candidate box against the previous size (patch units).
Tensor<float> penalty_map(const Tensor<float>& boxes, double prev_w, double prev_h, const PostprocConfig& cfg);

Tensor<float> window_map(int n, WindowMode mode);
Tensor<float> blend(const Tensor<float>& scores, const Tensor<float>& window, double influence);
Tensor<float> fuse_scores(const Tensor<float>& cls, const Tensor<float>& quality);

// Row-major argmax; ties go to the smallest index.
int argmax(const Tensor<float>& t);

struct FrameTelemetry {
  int frame = 0;
  double max_score = 0;   // max of the fused score
  int sel_row = -1, sel_col = -1;
  double penalty = 0;     // p at the selected cell
  double pscore = 0;      // penalized score at the selected cell
  bool lost = false;
  std::optional<BBox> anchor_box;  // winning anchor, frame coordinates
  BBox candidate;                  // B_curr, frame coordinates
};

struct Selection {
  BBox box;
  FrameTelemetry telemetry;
  Tensor<float> final_map;  // the map argmax ran on
};

// Appendix-style post-processing on one frame's candidates.
Selection select_and_update(const Candidates& cand, const CropTransform& transform, const BBox& prev_box,
                            int frame_w, int frame_h, const PostprocConfig& cfg);

struct FrameResult {
  BBox box;
  FrameTelemetry telemetry;
};

FrameResult track_frame(const ResponseModel& model, TrackerState& state, const Frame& frame,
                        const PostprocConfig& cfg, Tensor<float>* final_map = nullptr);

struct TrackOutput {
  std::vector<FrameResult> frames;  // frame 0 carries the init box
};

using MapSink = std::function<void(int frame, const Tensor<float>& map)>;

TrackOutput track_sequence(const ResponseModel& model, const std::vector<Frame>& frames, const BBox& gt0,
                           const PostprocConfig& cfg, const MapSink& sink = {});

std::string results_csv(const TrackOutput& out);
std::vector<BBox> boxes_of(const TrackOutput& out);
// Boxes from a results CSV, in frame order.
std::vector<BBox> load_results(const std::filesystem::path& path);

// Score-map dumps: raw CSV and min-max normalized 8-bit PGM.
std::string map_csv(const Tensor<float>& map);
void write_pgm(const Tensor<float>& map, const std::filesystem::path& path);

}  // namespace sfpp
