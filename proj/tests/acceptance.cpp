// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "sfpp/checkpoint.hpp"
#include "sfpp/config.hpp"
#include "sfpp/gradcheck_suite.hpp"
#include "support/oracle_stub.hpp"

using namespace sfpp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kOut = "acceptance_out";

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("criterion %d %s: %s (%s)\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

void run(int id, const std::string& name, const std::function<Outcome()>& fn) {
  try {
    report(id, name, fn());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  const GradcheckSuite suite = run_gradcheck_suite(20, 1, 1e-4);
  const double secs = seconds_since(t0);
  write_text(kOut / "gradcheck.txt", suite.report());
  return {suite.pass() && suite.min_instances() >= 20 && secs < 120,
          fmt("%.0f ops, >= %.0f instances each, max rel err %.2e, %.1f s", double(suite.entries.size()),
              suite.min_instances(), suite.max_rel_err(), secs)};
}

Outcome codec_round_trip() {
  const auto t0 = Clock::now();
  const ScoreGeometry g = ModelConfig{}.geometry();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(16, 112), s(6, 80);
  double worst = 0, pss_lo = 1, pss_hi = 0;
  long positives = 0;
  int centers_checked = 0;
  bool centers_ok = true;
  for (int i = 0; i < 1000; ++i) {
    // Every fourth box is centered exactly on a cell pixel.
    BBox gt = BBox::from_center(c(rng), c(rng), s(rng), s(rng));
    int cx = -1, cy = -1;
    if (i % 4 == 0) {
      cx = int(rng() % unsigned(g.size));
      cy = int(rng() % unsigned(g.size));
      const auto [px, py] = g.cell_to_pixel(cx, cy);
      gt = BBox::from_center(px, py, gt.width(), gt.height());
    }
    const TargetMaps m = assign_and_encode(gt, g);
    for (int y = 0; y < g.size; ++y)
      for (int x = 0; x < g.size; ++x) {
        if (m.cls_star(y, x) != 1.0) continue;
        ++positives;
        const BBox d = decode_box(x, y, {m.reg_star(0, y, x), m.reg_star(1, y, x), m.reg_star(2, y, x), m.reg_star(3, y, x)}, g);
        worst = std::max({worst, std::abs(d.x0 - gt.x0), std::abs(d.y0 - gt.y0), std::abs(d.x1 - gt.x1),
                          std::abs(d.y1 - gt.y1)});
        pss_lo = std::min(pss_lo, m.quality_star(y, x));
        pss_hi = std::max(pss_hi, m.quality_star(y, x));
      }
    if (cx >= 0) {
      ++centers_checked;
      centers_ok = centers_ok && m.cls_star(cy, cx) == 1.0 && near(m.quality_star(cy, cx), 1.0, 1e-12);
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && pss_lo > 0 && pss_hi <= 1 && centers_ok && secs < 10,
          fmt("%.0f positive cells, max decode error %.1e, PSS in [%.3g, %.3g]", double(positives), worst, pss_lo,
              pss_hi) +
              fmt(", %.0f exact-center cells score 1, %.2f s", centers_checked, secs)};
}

Outcome hand_values() {
  const double tol = 1e-5;
  const TargetMaps m = assign_and_encode(BBox{4, 6, 20, 18}, 5, 8);
  const bool reg = m.cls_star(1, 1) == 1.0 && near(m.reg_star(0, 1, 1), 8, tol) && near(m.reg_star(1, 1, 1), 6, tol) &&
                   near(m.reg_star(2, 1, 1), 8, tol) && near(m.reg_star(3, 1, 1), 6, tol);
  const double p1 = pss(1, 2, 3, 2), p2 = pss(1, 1, 4, 4);
  const double i7 = iou(BBox{0, 0, 2, 2}, BBox{1, 1, 3, 3});
  // Positive cell at p = 0.5: alpha * (1 - p)^gamma * ln 2.
  Tape<double> t;
  const double focal =
      t.value(focal_loss(t, t.constant(Tensor<double>(Shape{1, 1}, 0.0)), Tensor<double>(Shape{1, 1}, 1.0), 2.0, 0.25))
          .item();
  const Tensor<double> target(Shape{4, 1, 1}, {3.0, 2.0, 5.0, 4.0});
  Tensor<double> doubled = target;
  doubled.array() *= 2.0;
  const double il = t.value(iou_loss(t, t.constant(doubled), target, Tensor<double>(Shape{1, 1}, 1.0)).loss).item();
  const bool ok = reg && near(p1, 0.57735, tol) && near(p2, 0.25, tol) && near(i7, 1.0 / 7.0, tol) &&
                  near(focal, 0.04332, tol) && near(il, std::log(4.0), tol);
  return {ok, "(l,t,r,b)=" + fmt("(%g,%g,%g,%g)", m.reg_star(0, 1, 1), m.reg_star(1, 1, 1), m.reg_star(2, 1, 1),
                                  m.reg_star(3, 1, 1)) +
                  fmt(" pss %.5f %.5f iou %.5f", p1, p2, i7) + fmt(" focal %.5f iou-loss %.5f", focal, il)};
}

Outcome stub_tracking() {
  const auto t0 = Clock::now();
  auto max_corner_err = [](const TrackOutput& out, const std::vector<BBox>& gt) {
    double e = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
      const BBox& b = out.frames[i].box;
      e = std::max({e, std::abs(b.x0 - gt[i].x0), std::abs(b.y0 - gt[i].y0), std::abs(b.x1 - gt[i].x1),
                    std::abs(b.y1 - gt[i].y1)});
    }
    return e;
  };
  auto max_center_err = [](const TrackOutput& out, const std::vector<BBox>& gt) {
    double e = 0;
    for (size_t i = 0; i < gt.size(); ++i)
      e = std::max(e, std::hypot(out.frames[i].box.cx() - gt[i].cx(), out.frames[i].box.cy() - gt[i].cy()));
    return e;
  };
  PostprocConfig defaults, off;
  off.k = 0;
  off.window_influence = 0;

  const auto still = oracle::stub_scene(30, 0, 0);
  const double e_still = max_corner_err(track_sequence(oracle::GtStub(still.gt), still.frames, still.gt[0], defaults), still.gt);
  const auto moving = oracle::stub_scene(25, 4, 2);
  const double e_off = max_corner_err(track_sequence(oracle::GtStub(moving.gt), moving.frames, moving.gt[0], off), moving.gt);
  // With exact distances every cell regresses the true box, so the window
  // cannot pull the prediction away.
  const double e_win = max_corner_err(track_sequence(oracle::GtStub(moving.gt), moving.frames, moving.gt[0], defaults), moving.gt);
  // A stub whose boxes sit on the cell grid lags by at most half a cell
  // diagonal in frame pixels.
  const oracle::GtStub grid(moving.gt, oracle::GtStub::Boxes::kCellCentered);
  const double e_grid = max_center_err(track_sequence(grid, moving.frames, moving.gt[0], defaults), moving.gt);
  const double w = moving.gt[0].width(), h = moving.gt[0].height(), pad = defaults.context * (w + h);
  const double extent = std::sqrt((w + pad) * (h + pad)) * 128.0 / 64.0;
  const double bound = 0.5 * std::sqrt(2.0) * 8.0 * extent / 128.0;
  const double secs = seconds_since(t0);
  return {e_still <= 1.0 && e_off <= 1e-3 && e_win <= 1.0 && e_grid <= bound && secs < 5,
          fmt("stationary %.1e px, moving k=0 W=0 %.1e px, moving default %.1e px", e_still, e_off, e_win) +
              fmt(", grid-anchored lag %.2f px <= %.2f, %.2f s", e_grid, bound, secs)};
}

Outcome postprocessing_invariants() {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(0, 1);
  auto rand_map = [&](int n) {
    Tensor<float> t(Shape{n, n});
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
  };
  PostprocConfig off;
  off.k = 0;
  off.window_influence = 0;
  int argmax_ok = 0, blend_ok = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    Candidates c;
    c.cls = rand_map(17);
    c.quality = rand_map(17);
    c.boxes = Tensor<float>(Shape{4, 17, 17});
    std::uniform_real_distribution<float> pos(0, 100), size(5, 40);
    for (int k = 0; k < 17 * 17; ++k) {
      const float x = pos(rng), y = pos(rng);
      c.boxes[k] = x;
      c.boxes[17 * 17 + k] = y;
      c.boxes[2 * 17 * 17 + k] = x + size(rng);
      c.boxes[3 * 17 * 17 + k] = y + size(rng);
    }
    const Selection s = select_and_update(c, CropTransform{}, BBox{40, 40, 70, 64}, 300, 300, off);
    argmax_ok += s.telemetry.sel_row * 17 + s.telemetry.sel_col == argmax(fuse_scores(c.cls, c.quality));

    const Tensor<float> a = rand_map(17), win = rand_map(17);
    const double om = u(rng);
    const Tensor<float> b = blend(a, win, om);
    bool ok = true;
    for (Eigen::Index k = 0; k < b.size(); ++k)
      ok = ok && b[k] >= std::min(a[k], win[k]) - 1e-6f && b[k] <= std::max(a[k], win[k]) + 1e-6f;
    blend_ok += ok;
  }
  Tensor<float> same(Shape{4, 3, 3});
  for (int k = 0; k < 9; ++k) {
    same[k] = 10;
    same[9 + k] = 20;
    same[18 + k] = 40;
    same[27 + k] = 44;
  }
  PostprocConfig cfg;
  const double p_norm = penalty_map(same, 30, 24, cfg).array().maxCoeff();
  const double p_norm_min = penalty_map(same, 30, 24, cfg).array().minCoeff();
  cfg.penalty_mode = PenaltyMode::kPaperLiteral;
  const double p_lit = penalty_map(same, 30, 24, cfg)[0];
  const bool ok = argmax_ok == trials && blend_ok == trials && near(p_norm, 1, 1e-6) && near(p_norm_min, 1, 1e-6) &&
                  near(p_lit, std::exp(cfg.k), 1e-6);
  return {ok, fmt("raw argmax %.0f/%.0f, blend bounds %.0f/%.0f", argmax_ok, trials, blend_ok, trials) +
                  fmt(", penalty at no change %.6f (normalized) %.6f (literal, e^k=%.6f)", p_norm, p_lit,
                      std::exp(cfg.k))};
}

Outcome determinism() {
  RunConfig rc;
  apply_config_text(rc,
                    "[model]\nbackbone_channels = 4,4,8,8\n[world]\ntrain_sequences = 4\ntest_sequences = 3\n"
                    "sequence_length = 12\n[train]\ntotal_epochs = 2\npairs_per_epoch = 32\n");
  rc.finalize();
  const ExperimentConfig& e = rc.exp;
  const auto pool = make_pool(e.world, false), held = make_pool(e.world, true);
  std::vector<std::string> ckpt_bytes, results, reports;
  for (int run = 0; run < 2; ++run) {
    const TrainResult r = train(SiamModel<float>::init(e.model, e.init_seed), pool, e.train, e.loss, e.sampler, e.anchors);
    const fs::path path = kOut / ("determinism_" + std::to_string(run) + ".ckpt");
    save_checkpoint({r.model.config(), r.model.parameters(), r.state.velocity, r.state.step}, path);
    ckpt_bytes.push_back(slurp(path));
    const NetworkResponse net(load_checkpoint(path).model(), e.anchors);
    const BenchmarkRun b = run_benchmark(net, held, e.track, run + 1);  // thread count must not matter
    std::string csv;
    for (const auto& s : b.sequences) csv += results_csv(s.output);
    results.push_back(csv);
    reports.push_back(b.overall.summary());
  }
  const bool same = ckpt_bytes[0] == ckpt_bytes[1] && results[0] == results[1] && reports[0] == reports[1];

  // Round trip: load then save gives the same bytes and the same values.
  const fs::path p0 = kOut / "determinism_0.ckpt", p1 = kOut / "roundtrip.ckpt";
  const Checkpoint loaded = load_checkpoint(p0);
  save_checkpoint(loaded, p1);
  bool round = slurp(p1) == ckpt_bytes[0];
  const Checkpoint again = load_checkpoint(p1);
  for (const auto& [name, t] : loaded.params) round = round && again.params.at(name) == t;

  // Corruptions are rejected with a format error.
  int rejected = 0, tried = 0;
  auto corrupt = [&](const std::string& bytes) {
    ++tried;
    write_text(kOut / "corrupt.ckpt", bytes);
    try {
      load_checkpoint(kOut / "corrupt.ckpt");
    } catch (const FormatError&) {
      ++rejected;
    }
  };
  std::string b = ckpt_bytes[0];
  b[0] = 'X';
  corrupt(b);
  b = ckpt_bytes[0];
  b[4] = 2;  // version
  corrupt(b);
  corrupt(ckpt_bytes[0].substr(0, ckpt_bytes[0].size() / 2));
  corrupt(ckpt_bytes[0] + "extra");
  corrupt("");
  return {same && round && rejected == tried,
          std::string(same ? "identical" : "DIFFERENT") + " checkpoints/results/reports across runs, round trip " +
              (round ? "bit-exact" : "MISMATCH") + fmt(", %.0f/%.0f corruptions rejected", rejected, tried)};
}

}  // namespace

int main() {
  fs::create_directories(kOut);
  run(1, "gradient oracle", gradient_oracle);
  run(2, "codec round trip", codec_round_trip);
  run(3, "hand values", hand_values);
  run(4, "oracle-stub tracking", stub_tracking);
  run(8, "post-processing invariants", postprocessing_invariants);
  run(9, "determinism and persistence", determinism);

  // 5, 6 and 7 share one ablation run on the default configuration.
  RunConfig rc;
  rc.finalize();
  const ExperimentConfig& cfg = rc.exp;
  std::printf("running the default ablation (%d pairs, batch %d, %d held-out sequences)...\n",
              cfg.train.total_epochs * cfg.train.pairs_per_epoch, cfg.train.batch_size, cfg.world.test_sequences);
  std::fflush(stdout);
  std::optional<AblationResult> abl;
  std::string abl_error;
  try {
    abl = run_ablation(cfg, [](const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); });
    write_text(kOut / "ablation.csv", abl->table_csv());
  } catch (const std::exception& e) {
    abl_error = e.what();
  }
  auto need_ablation = [&]() {
    if (!abl) throw std::runtime_error("ablation failed: " + abl_error);
    return *abl;
  };

  run(5, "desk-scale learning", [&]() -> Outcome {
    const AblationResult r = need_ablation();
    const auto& pss = r.at("pss");
    const auto& untrained = r.at("untrained");
    const double pairs = double(cfg.train.total_epochs) * cfg.train.pairs_per_epoch;
    const bool ok = pss.report.ao >= 0.5 && pss.report.sr50 >= 0.6 && untrained.report.ao <= 0.2 && pairs <= 12000 &&
                    cfg.train.batch_size == 8 && cfg.world.test_sequences == 20 && pss.train_seconds <= 1800;
    return {ok, fmt("AO %.3f, SR@0.5 %.3f, untrained AO %.3f, ", pss.report.ao, pss.report.sr50, untrained.report.ao) +
                    fmt("%.0f pairs, trained in %.0f s", pairs, pss.train_seconds)};
  });

  run(6, "quality-branch direction", [&]() -> Outcome {
    const AblationResult r = need_ablation();
    const double fused = r.at("pss").report.ao, cls_only = r.at("pss_cls_only").report.ao;
    const double iou_ao = r.at("iou").report.ao, none = r.at("none").report.ao;
    return {fused >= cls_only - 0.02,
            fmt("fused AO %.3f vs cls-only %.3f; table: pss %.3f, iou %.3f", fused, cls_only, fused, iou_ao) +
                fmt(", none %.3f", none)};
  });

  run(7, "score ambiguity", [&]() -> Outcome {
    const AblationResult r = need_ablation();
    const auto& pp = r.at("pss");
    const auto& an = r.at("anchor");
    write_text(kOut / "scores_per_pixel.csv", pp.scores.to_csv());
    write_text(kOut / "scores_anchor.csv", an.scores.to_csv());
    const bool written = fs::file_size(kOut / "scores_per_pixel.csv") > 0 && fs::file_size(kOut / "scores_anchor.csv") > 0;
    const bool valid = !pp.scores.degenerate && !an.scores.degenerate;
    return {written && valid && pp.scores.ks >= an.scores.ks,
            fmt("KS per-pixel %.3f vs anchor %.3f (success/failure frames %.0f/%.0f per-pixel", pp.scores.ks,
                an.scores.ks, pp.scores.n_success, pp.scores.n_failure) +
                fmt(", %.0f/%.0f anchor); histograms in ", an.scores.n_success, an.scores.n_failure) + kOut.string()};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
