#include "sfpp/gradcheck_suite.hpp"

#include <chrono>
#include <random>
#include <sstream>

#include "sfpp/anchor.hpp"
#include "sfpp/loss.hpp"
#include "sfpp/model.hpp"

namespace sfpp {

bool GradcheckSuite::pass() const {
  for (const auto& e : entries)
    if (e.failures > 0) return false;
  return !entries.empty();
}

int GradcheckSuite::min_instances() const {
  int n = entries.empty() ? 0 : entries.front().instances;
  for (const auto& e : entries) n = std::min(n, e.instances);
  return n;
}

double GradcheckSuite::max_rel_err() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_err);
  return m;
}

std::string GradcheckSuite::report() const {
  std::ostringstream os;
  char line[256];
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-26s instances=%d failures=%d max_rel_err=%.3e time=%.2fs\n", e.op.c_str(),
                  e.instances, e.failures, e.max_rel_err, e.seconds);
    os << line;
  }
  std::snprintf(line, sizeof line, "%s max_rel_err=%.3e tol=%.1e\n", pass() ? "pass" : "FAIL", max_rel_err(),
                tolerance);
  os << line;
  return os.str();
}

namespace {

using T = Tensor<double>;
using Rng = std::mt19937_64;

T random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  T t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

int rand_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Scalar readout sum(y * w) with a fixed random weight, so every output
// element carries a distinct gradient.
Var readout(Tape<double>& tape, Var y, Rng& rng) {
  return sum(tape, mul(tape, y, tape.constant(random_tensor(rng, tape.value(y).shape()))));
}

struct Runner {
  GradcheckSuite& suite;
  int instances;
  Rng& rng;
  double tol;

  // make() returns the input and the function for one random instance.
  template <typename Make>
  void run(const std::string& op, Make make) {
    GradcheckEntry e{op, instances, 0, 0, 0};
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < instances; ++i) {
      auto [x, f] = make(i);
      const GradCheckReport r = finite_diff_check(f, x, 1e-6, tol);
      e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
      e.failures += !r.pass;
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    suite.entries.push_back(e);
  }
};

// Values kept away from relu's kink so central differences never straddle it.
T away_from_zero(Rng& rng, Shape shape) {
  T t = random_tensor(rng, std::move(shape), 0.05, 1.0);
  for (auto& v : t.values())
    if (rng() & 1) v = -v;
  return t;
}

struct ObjectiveInstance {
  ModelConfig cfg;
  ParameterSet<double> params;
  T z, x;
  TargetMaps targets;
  AnchorTargets anchor_targets;
};

Eigen::Index total_size(const ParameterSet<double>& p) { return p.scalar_count(); }

T flatten(const ParameterSet<double>& p) {
  T flat(Shape{int(total_size(p))});
  Eigen::Index at = 0;
  for (const auto& [name, t] : p) {
    flat.array().segment(at, t.size()) = t.array();
    at += t.size();
  }
  return flat;
}

Var objective(Tape<double>& tape, const SiamModel<double>& model, const BoundParams& bp, const ObjectiveInstance& in) {
  const auto fz = model.embed(tape, bp, tape.constant(in.z), Branch::kTemplate);
  const auto fx = model.embed(tape, bp, tape.constant(in.x), Branch::kSearch);
  const HeadVars h = model.forward_heads(tape, bp, fz, fx);
  if (in.cfg.head_kind == HeadKind::kAnchor) return anchor_loss(tape, h, in.anchor_targets, LossConfig{}).total;
  return total_loss(tape, h, in.targets, LossConfig{}).total;
}

}  // namespace

GradcheckSuite run_gradcheck_suite(int instances, std::uint64_t seed, double tol) {
  GradcheckSuite suite;
  suite.tolerance = tol;
  Rng rng(seed);
  Runner run{suite, instances, rng, tol};
  using Make = std::pair<T, TapeFunction>;

  auto conv_case = [&](int which) {
    return [&, which](int) -> Make {
      const int cin = rand_int(rng, 1, 3), cout = rand_int(rng, 1, 3), k = rand_int(rng, 1, 3);
      const int size = rand_int(rng, k + 2, 7), stride = rand_int(rng, 1, 2), pad = rand_int(rng, 0, 1);
      T in = random_tensor(rng, Shape{cin, size, size});
      T w = random_tensor(rng, Shape{cout, cin, k, k});
      T b = random_tensor(rng, Shape{cout});
      const T x = which == 0 ? in : which == 1 ? w : b;
      const Rng snapshot = rng;
      return {x, [=](Tape<double>& t, Var v) {
                Rng r = snapshot;
                Var vi = which == 0 ? v : t.constant(in);
                Var vw = which == 1 ? v : t.constant(w);
                Var vb = which == 2 ? v : t.constant(b);
                return readout(t, conv2d(t, vi, vw, vb, stride, pad), r);
              }};
    };
  };
  run.run("conv2d.input", conv_case(0));
  run.run("conv2d.kernel", conv_case(1));
  run.run("conv2d.bias", conv_case(2));

  auto xcorr_case = [&](bool wrt_template) {
    return [&, wrt_template](int) -> Make {
      const int c = rand_int(rng, 1, 3), ht = rand_int(rng, 1, 3), hs = rand_int(rng, ht, 6);
      T z = random_tensor(rng, Shape{c, ht, ht});
      T s = random_tensor(rng, Shape{c, hs, hs});
      const Rng snapshot = rng;
      return {wrt_template ? z : s, [=](Tape<double>& t, Var v) {
                Rng r = snapshot;
                return readout(t, xcorr_depthwise(t, wrt_template ? v : t.constant(z), wrt_template ? t.constant(s) : v),
                               r);
              }};
    };
  };
  run.run("xcorr_depthwise.template", xcorr_case(true));
  run.run("xcorr_depthwise.search", xcorr_case(false));

  auto unary = [&](auto op, bool kink) {
    return [&, op, kink](int) -> Make {
      const Shape shape{rand_int(rng, 1, 3), rand_int(rng, 2, 5), rand_int(rng, 2, 5)};
      T x = kink ? away_from_zero(rng, shape) : random_tensor(rng, shape);
      const Rng snapshot = rng;
      return {x, [=](Tape<double>& t, Var v) {
                Rng r = snapshot;
                return readout(t, op(t, v), r);
              }};
    };
  };
  run.run("relu", unary([](Tape<double>& t, Var v) { return relu(t, v); }, true));
  run.run("exp", unary([](Tape<double>& t, Var v) { return exp(t, v); }, false));
  run.run("scale", unary([](Tape<double>& t, Var v) { return scale(t, v, -1.7); }, false));
  run.run("crop_border", unary([](Tape<double>& t, Var v) {
            const int b = t.value(v).dim(1) > 2 && t.value(v).dim(2) > 2 ? 1 : 0;
            return crop_border(t, v, b);
          }, false));
  run.run("maxpool2d", [&](int) -> Make {
    // Distinct values one apart so no window holds a near-tie.
    const int c = rand_int(rng, 1, 2), n = 2 * rand_int(rng, 1, 3);
    T x(Shape{c, n, n});
    std::vector<double> v(size_t(x.size()));
    for (size_t i = 0; i < v.size(); ++i) v[i] = double(i);
    std::shuffle(v.begin(), v.end(), rng);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 0.1 * v[size_t(i)];
    const Rng snapshot = rng;
    return {x, [=](Tape<double>& t, Var in) {
              Rng r = snapshot;
              return readout(t, maxpool2d(t, in, 2), r);
            }};
  });
  auto binary = [&](bool is_mul, bool broadcast) {
    return [&, is_mul, broadcast](int i) -> Make {
      const Shape shape{rand_int(rng, 1, 3), rand_int(rng, 2, 4), rand_int(rng, 2, 4)};
      T a = random_tensor(rng, shape);
      T b = broadcast ? random_tensor(rng, Shape{}) : random_tensor(rng, shape);
      const bool wrt_a = i % 2 == 0;
      const Rng snapshot = rng;
      return {wrt_a ? a : b, [=](Tape<double>& t, Var v) {
                Rng r = snapshot;
                Var va = wrt_a ? v : t.constant(a), vb = wrt_a ? t.constant(b) : v;
                return readout(t, is_mul ? mul(t, va, vb) : add(t, va, vb), r);
              }};
    };
  };
  run.run("add", binary(false, false));
  run.run("add.broadcast", binary(false, true));
  run.run("mul", binary(true, false));
  run.run("mul.broadcast", binary(true, true));

  auto labels = [&](int n, double p) {
    T l(Shape{n, n});
    std::bernoulli_distribution coin(p);
    for (auto& v : l.values()) v = coin(rng) ? 1.0 : 0.0;
    l(0, 0) = 1.0;
    return l;
  };
  run.run("focal_loss", [&](int i) -> Make {
    const int n = rand_int(rng, 3, 6);
    T logits = random_tensor(rng, Shape{n, n}, -4, 4);
    T star = labels(n, 0.3);
    T weight = random_tensor(rng, Shape{n, n}, 0, 1);
    const bool weighted = i % 2 == 1;
    return {logits, [=](Tape<double>& t, Var v) {
              return focal_loss(t, v, star, 2.0, 0.25, weighted ? &weight : nullptr);
            }};
  });
  run.run("bce_loss", [&](int) -> Make {
    const int n = rand_int(rng, 3, 6);
    T logits = random_tensor(rng, Shape{n, n}, -4, 4);
    T q = random_tensor(rng, Shape{n, n}, 0, 1);
    T mask = labels(n, 0.5);
    return {logits, [=](Tape<double>& t, Var v) { return bce_loss(t, v, q, mask); }};
  });
  run.run("iou_loss", [&](int) -> Make {
    const int n = rand_int(rng, 3, 5);
    T pred = random_tensor(rng, Shape{4, n, n}, 0.5, 6);
    T star = random_tensor(rng, Shape{4, n, n}, 0.5, 6);
    T mask = labels(n, 0.5);
    return {pred, [=](Tape<double>& t, Var v) { return iou_loss(t, v, star, mask).loss; }};
  });
  run.run("smooth_l1_loss", [&](int) -> Make {
    const int n = rand_int(rng, 3, 5);
    T pred = random_tensor(rng, Shape{4, n, n}, -1, 1);
    T star = random_tensor(rng, Shape{4, n, n}, -1, 1);
    T mask(Shape{4, n, n}, 1.0);
    return {pred, [=](Tape<double>& t, Var v) { return smooth_l1_loss(t, v, star, mask); }};
  });

  // Full objective with respect to every parameter of a small model. IoU-mode
  // quality targets are frozen at the unperturbed point, matching the
  // stop-gradient of the training objective.
  run.run("objective", [&](int i) -> Make {
    ObjectiveInstance in;
    in.cfg.backbone_channels = {3, 4, 4, 4};
    in.cfg.template_size = 32;
    in.cfg.search_size = 64;
    in.cfg.head_tower_depth = 1;
    in.cfg.init_std = 0.05;
    const int variant = i % 4;
    in.cfg.head_kind = variant == 3 ? HeadKind::kAnchor : HeadKind::kPerPixel;
    in.cfg.quality_mode = variant == 1 ? QualityMode::kNone : QualityMode::kPss;
    in.params = SiamModel<double>::init(in.cfg, rng()).parameters();
    for (auto& [name, t] : in.params)
      if (name.find(".bias") != std::string::npos) t = random_tensor(rng, t.shape(), -0.1, 0.1);
    in.z = random_tensor(rng, Shape{3, 32, 32});
    in.x = random_tensor(rng, Shape{3, 64, 64});
    const double cx = std::uniform_real_distribution<double>(24, 40)(rng);
    const double cy = std::uniform_real_distribution<double>(24, 40)(rng);
    const BBox gt = BBox::from_center(cx, cy, std::uniform_real_distribution<double>(12, 28)(rng),
                                      std::uniform_real_distribution<double>(12, 28)(rng));
    const ScoreGeometry geom = in.cfg.geometry();
    if (variant == 3) {
      AnchorConfig anchors;
      anchors.base_size = 16;
      in.anchor_targets = assign_anchor_targets(&gt, anchors, geom);
    } else {
      in.targets = assign_and_encode(gt, geom, {in.cfg.quality_mode});
      if (variant == 2) {
        const SiamModel<double> m(in.cfg, in.params);
        const auto h = m.forward(m.embed(in.z, Branch::kTemplate), in.x);
        in.targets.quality_star =
            iou_quality_targets(decode_distances(h.reg, geom.stride), in.targets.reg_star, in.targets.cls_star);
      }
    }
    const T flat = flatten(in.params);
    return {flat, [in](Tape<double>& t, Var v) {
              // Unflatten inside the tape so gradients reach the flat vector.
              const SiamModel<double> model(in.cfg, in.params);
              BoundParams bp;
              const Var column = reshape(t, v, Shape{t.value(v).dim(0), 1, 1});
              int at = 0;
              for (const auto& [name, p] : in.params) {
                const int n = int(p.size());
                bp.vars[name] = reshape(t, slice_channels(t, column, at, n), p.shape());
                at += n;
              }
              return objective(t, model, bp, in);
            }};
  });
  return suite;
}

}  // namespace sfpp
