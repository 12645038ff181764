#include "sfpp/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sfpp {

std::string to_string(WindowMode m) { return m == WindowMode::kPaperLiteral ? "paper_literal" : "standard_hann"; }
std::string to_string(PenaltyMode m) { return m == PenaltyMode::kPaperLiteral ? "paper_literal" : "normalized"; }
std::string to_string(SizeDef m) { return m == SizeDef::kArea ? "area" : "padded_sqrt"; }

WindowMode parse_window_mode(const std::string& s) {
  if (s == "standard_hann") return WindowMode::kStandardHann;
  if (s == "paper_literal") return WindowMode::kPaperLiteral;
  throw ConfigError("unknown window mode '" + s + "' (expected standard_hann or paper_literal)");
}

PenaltyMode parse_penalty_mode(const std::string& s) {
  if (s == "normalized") return PenaltyMode::kNormalized;
  if (s == "paper_literal") return PenaltyMode::kPaperLiteral;
  throw ConfigError("unknown penalty mode '" + s + "' (expected normalized or paper_literal)");
}

SizeDef parse_size_def(const std::string& s) {
  if (s == "padded_sqrt") return SizeDef::kPaddedSqrt;
  if (s == "area") return SizeDef::kArea;
  throw ConfigError("unknown size definition '" + s + "' (expected padded_sqrt or area)");
}

void PostprocConfig::validate() const {
  if (!(k >= 0)) throw ConfigError("track.k must be >= 0");
  if (!(window_influence >= 0 && window_influence <= 1)) throw ConfigError("track.window_influence must be in [0,1]");
  if (!(size_lr >= 0 && size_lr <= 1)) throw ConfigError("track.size_lr must be in [0,1]");
  if (!(context >= 0)) throw ConfigError("track.context must be >= 0");
  if (!(min_size > 0)) throw ConfigError("track.min_size must be > 0");
}

// ---------------------------------------------------------------------------

NetworkResponse::NetworkResponse(SiamModel<float> model, AnchorConfig anchors)
    : model_(std::move(model)), anchors_(std::move(anchors)) {
  if (model_.config().head_kind == HeadKind::kAnchor && anchors_.count() != model_.config().anchor_count)
    throw ConfigError("anchor config does not match the model's anchor count");
}

PairGeometry NetworkResponse::geometry() const {
  return {model_.config().template_size, model_.config().search_size, 0.5};
}

ResponseModel::Template NetworkResponse::encode_template(const Patch& patch) const {
  return {model_.embed(normalize_patch(patch), Branch::kTemplate)};
}

Candidates NetworkResponse::respond(const Template& z, const Patch& search, const SearchContext&) const {
  const HeadOutput<float> out = model_.forward(z.features, normalize_patch(search));
  const ScoreGeometry geom = model_.geometry();
  const int n = geom.size;
  Candidates c;
  c.boxes = Tensor<float>(Shape{4, n, n});
  auto set_box = [&](int y, int x, const BBox& b) {
    c.boxes(0, y, x) = float(b.x0);
    c.boxes(1, y, x) = float(b.y0);
    c.boxes(2, y, x) = float(b.x1);
    c.boxes(3, y, x) = float(b.y1);
  };

  if (model_.config().head_kind == HeadKind::kAnchor) {
    const Maxout m = maxout_score(sigmoid(out.cls));
    c.cls = m.score;
    c.quality = Tensor<float>(Shape{n, n}, 1.0f);
    Tensor<float> anchors(Shape{4, n, n});
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int k = m.arg[size_t(y) * n + x];
        const BBox a = anchor_box(anchors_, geom, k, x, y);
        anchors(0, y, x) = float(a.x0);
        anchors(1, y, x) = float(a.y0);
        anchors(2, y, x) = float(a.x1);
        anchors(3, y, x) = float(a.y1);
        std::array<double, 4> o{};
        for (int j = 0; j < 4; ++j) o[size_t(j)] = out.reg(4 * k + j, y, x);
        try {
          set_box(y, x, anchor_decode(a, o));
        } catch (const NumericError&) {
          set_box(y, x, BBox{});  // zero area: penalized to 0
        }
      }
    c.anchors = std::move(anchors);
    return c;
  }

  c.cls = sigmoid(out.cls);
  c.quality = out.quality.empty() ? Tensor<float>(Shape{n, n}, 1.0f) : sigmoid(out.quality);
  const Tensor<float> d = decode_distances(out.reg, geom.stride);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) set_box(y, x, decode_box(x, y, {d(0, y, x), d(1, y, x), d(2, y, x), d(3, y, x)}, geom));
  return c;
}

// ---------------------------------------------------------------------------

TrackerState init_tracker(const ResponseModel& model, const Frame& frame0, const BBox& gt0,
                          const PostprocConfig& cfg) {
  if (!gt0.valid() || !std::isfinite(gt0.area())) throw InvalidArgument("init: degenerate initial box");
  const PairGeometry g = model.geometry();
  TrackerState s;
  s.prev_box = gt0;
  s.templ = model.encode_template(crop_patch(frame0, gt0, g.template_size, cfg.context).image);
  return s;
}

double penalty_size(double w, double h, SizeDef def) {
  if (def == SizeDef::kArea) return w * h;
  const double pad = 0.5 * (w + h);
  return std::sqrt((w + pad) * (h + pad));
}

Tensor<float> penalty_map(const Tensor<float>& boxes, double prev_w, double prev_h, const PostprocConfig& cfg) {
  if (boxes.rank() != 3 || boxes.dim(0) != 4) throw ShapeError("penalty_map: boxes must be [4,N,N]");
  if (!(prev_w > 0 && prev_h > 0)) throw InvalidArgument("penalty_map: degenerate previous box");
  const int h = boxes.dim(1), w = boxes.dim(2);
  const double r_prev = prev_w / prev_h, s_prev = penalty_size(prev_w, prev_h, cfg.size_def);
  Tensor<float> p(Shape{h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double bw = double(boxes(2, i, j)) - boxes(0, i, j);
      const double bh = double(boxes(3, i, j)) - boxes(1, i, j);
      if (!(bw > 0 && bh > 0)) continue;
      const double r = bw / bh, s = penalty_size(bw, bh, cfg.size_def);
      const double change = std::max(r / r_prev, r_prev / r) * std::max(s / s_prev, s_prev / s);
      p(i, j) = float(cfg.penalty_mode == PenaltyMode::kNormalized ? std::exp(-cfg.k * (change - 1.0))
                                                                    : std::exp(cfg.k * change));
    }
  return p;
}

Tensor<float> window_map(int n, WindowMode mode) {
  if (n < 3) throw InvalidArgument("window_map: N must be >= 3");
  Tensor<float> wm(Shape{n, n});
  if (mode == WindowMode::kStandardHann) {
    std::vector<double> hann(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) hann[size_t(i)] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / (n - 1));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) wm(i, j) = float(hann[size_t(i)] * hann[size_t(j)]);
    return wm;
  }
  // Radial form as printed; its period (N-1)/2 - 1 vanishes for N < 5 and is
  // clamped to 1 there.
  const double c = 0.5 * (n - 1);
  const double period = std::max(c - 1.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dist = std::hypot(i - c, j - c);
      wm(i, j) = float(0.5 - 0.5 * std::cos(2 * std::numbers::pi * dist / period));
    }
  return wm;
}

Tensor<float> blend(const Tensor<float>& scores, const Tensor<float>& window, double influence) {
  if (scores.shape() != window.shape()) throw ShapeError("blend: shape mismatch");
  if (influence == 0) return scores;
  if (influence == 1) return window;
  return Tensor<float>(scores.shape(),
                       (scores.array() * float(1 - influence) + window.array() * float(influence)).eval());
}

Tensor<float> fuse_scores(const Tensor<float>& cls, const Tensor<float>& quality) {
  if (cls.shape() != quality.shape()) throw ShapeError("fuse_scores: shape mismatch");
  return Tensor<float>(cls.shape(), (cls.array() * quality.array()).eval());
}

int argmax(const Tensor<float>& t) {
  int best = 0;
  for (Eigen::Index i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = int(i);
  return best;
}

Selection select_and_update(const Candidates& cand, const CropTransform& tf, const BBox& prev_box, int frame_w,
                            int frame_h, const PostprocConfig& cfg) {
  const int n = cand.cls.dim(0);
  const Tensor<float> fused = cfg.use_quality ? fuse_scores(cand.cls, cand.quality) : cand.cls;
  const double prev_w = prev_box.width() * tf.scale, prev_h = prev_box.height() * tf.scale;
  const Tensor<float> pen = penalty_map(cand.boxes, prev_w, prev_h, cfg);
  const Tensor<float> pscore(fused.shape(), (fused.array() * pen.array()).eval());

  Selection sel;
  FrameTelemetry& tel = sel.telemetry;
  tel.max_score = fused.array().maxCoeff();
  sel.final_map = blend(pscore, window_map(n, cfg.window_mode), cfg.window_influence);
  const int best = argmax(sel.final_map);
  if (!(sel.final_map[best] > 0)) {
    tel.lost = true;
    sel.box = prev_box;
    tel.candidate = prev_box;
    return sel;
  }
  const int row = best / n, col = best % n;
  tel.sel_row = row;
  tel.sel_col = col;
  tel.penalty = pen[best];
  tel.pscore = pscore[best];

  const BBox curr = tf.to_frame(
      BBox{cand.boxes(0, row, col), cand.boxes(1, row, col), cand.boxes(2, row, col), cand.boxes(3, row, col)});
  tel.candidate = curr;
  if (cand.anchors) {
    const Tensor<float>& a = *cand.anchors;
    tel.anchor_box = tf.to_frame(BBox{a(0, row, col), a(1, row, col), a(2, row, col), a(3, row, col)});
  }

  // Center from B_curr, kept inside the search footprint and the frame.
  const double lo_x = std::max(tf.to_frame_x(0), 0.0), hi_x = std::min(tf.to_frame_x(cand.patch_size), double(frame_w));
  const double lo_y = std::max(tf.to_frame_y(0), 0.0), hi_y = std::min(tf.to_frame_y(cand.patch_size), double(frame_h));
  const double cx = std::clamp(curr.cx(), lo_x, std::max(lo_x, hi_x));
  const double cy = std::clamp(curr.cy(), lo_y, std::max(lo_y, hi_y));

  const double rate = std::clamp(double(pscore[best]) * cfg.size_lr, 0.0, 1.0);
  double w = prev_box.width(), h = prev_box.height();
  if (curr.width() > 0 && curr.height() > 0 && std::isfinite(curr.area())) {
    w = (1 - rate) * w + rate * curr.width();
    h = (1 - rate) * h + rate * curr.height();
  }
  w = std::clamp(w, cfg.min_size, std::max(cfg.min_size, double(frame_w)));
  h = std::clamp(h, cfg.min_size, std::max(cfg.min_size, double(frame_h)));
  sel.box = BBox::from_center(cx, cy, w, h);
  return sel;
}

FrameResult track_frame(const ResponseModel& model, TrackerState& state, const Frame& frame,
                        const PostprocConfig& cfg, Tensor<float>* final_map) {
  const PairGeometry g = model.geometry();
  const BBox& prev = state.prev_box;
  const double side = context_side(prev, cfg.context) * g.search_size / g.template_size;
  const CroppedPatch crop = crop_window(frame, prev.cx(), prev.cy(), side, g.search_size);
  ++state.frame_index;
  Candidates cand = model.respond(state.templ, crop.image, {state.frame_index, crop.transform});
  cand.patch_size = g.search_size;
  Selection sel = select_and_update(cand, crop.transform, prev, frame.dim(2), frame.dim(1), cfg);
  sel.telemetry.frame = state.frame_index;
  state.prev_box = sel.box;
  if (final_map) *final_map = std::move(sel.final_map);
  return {sel.box, sel.telemetry};
}

TrackOutput track_sequence(const ResponseModel& model, const std::vector<Frame>& frames, const BBox& gt0,
                           const PostprocConfig& cfg, const MapSink& sink) {
  cfg.validate();
  if (frames.empty()) throw InvalidArgument("track_sequence: no frames");
  TrackOutput out;
  TrackerState state = init_tracker(model, frames[0], gt0, cfg);
  FrameResult first;
  first.box = gt0;
  first.telemetry.candidate = gt0;
  out.frames.push_back(first);
  Tensor<float> map;
  for (size_t t = 1; t < frames.size(); ++t) {
    out.frames.push_back(track_frame(model, state, frames[t], cfg, sink ? &map : nullptr));
    if (sink) sink(int(t), map);
  }
  return out;
}

std::string results_csv(const TrackOutput& out) {
  std::ostringstream os;
  os << "frame,x0,y0,x1,y1,max_score,sel_row,sel_col\n";
  char line[256];
  for (size_t t = 0; t < out.frames.size(); ++t) {
    const auto& f = out.frames[t];
    std::snprintf(line, sizeof line, "%zu,%.4f,%.4f,%.4f,%.4f,%.6f,%d,%d\n", t, f.box.x0, f.box.y0, f.box.x1,
                  f.box.y1, f.telemetry.max_score, f.telemetry.sel_row, f.telemetry.sel_col);
    os << line;
  }
  return os.str();
}

std::vector<BBox> boxes_of(const TrackOutput& out) {
  std::vector<BBox> boxes;
  for (const auto& f : out.frames) boxes.push_back(f.box);
  return boxes;
}

std::vector<BBox> load_results(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open results file " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("frame,x0,y0,x1,y1", 0) != 0)
    throw FormatError(path.string() + ": missing 'frame,x0,y0,x1,y1,...' header");
  std::vector<BBox> boxes;
  for (int lineno = 2; std::getline(f, line); ++lineno) {
    if (line.empty()) continue;
    long frame = -1;
    BBox b;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &frame, &b.x0, &b.y0, &b.x1, &b.y1) != 5)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    if (frame != long(boxes.size()))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": frames out of order");
    boxes.push_back(b);
  }
  return boxes;
}

std::string map_csv(const Tensor<float>& map) {
  std::ostringstream os;
  char cell[32];
  for (int i = 0; i < map.dim(0); ++i) {
    for (int j = 0; j < map.dim(1); ++j) {
      std::snprintf(cell, sizeof cell, "%s%.6g", j ? "," : "", map(i, j));
      os << cell;
    }
    os << '\n';
  }
  return os.str();
}

void write_pgm(const Tensor<float>& map, const std::filesystem::path& path) {
  const float lo = map.array().minCoeff(), hi = map.array().maxCoeff();
  const float range = hi > lo ? hi - lo : 1.0f;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const auto v = static_cast<unsigned char>(std::lround(255.0f * (map[i] - lo) / range));
    f.put(char(v));
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace sfpp
