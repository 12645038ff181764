#include "sfpp/train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"

namespace sfpp {

void TrainConfig::validate() const {
  if (!(base_lr > 0) || !(warmup_start_lr > 0)) throw ConfigError("train: learning rates must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must be in [0,1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (pairs_per_epoch < batch_size) throw ConfigError("train.pairs_per_epoch must be >= batch_size");
  if (warmup_epochs < 0 || total_epochs < 0) throw ConfigError("train: epoch counts must be >= 0");
  // total_epochs = 0 is a no-op run; otherwise warmup must leave annealing steps.
  if (total_epochs > 0 && warmup_epochs >= total_epochs)
    throw ConfigError("train.warmup_epochs must be < train.total_epochs");
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  const std::int64_t warm = cfg.warmup_steps(), total = cfg.total_steps();
  if (step < warm) return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * double(step) / double(warm);
  const double progress = total > warm ? double(step - warm) / double(total - warm) : 0.0;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

void sgd_momentum_step(ParameterSet<float>& params, const ParameterSet<float>& grads,
                       ParameterSet<float>& velocity, double lr, double momentum) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name) || params.at(name).shape() != g.shape())
      throw ShapeError("sgd_momentum_step: gradient " + name + " does not match a parameter");
    if (!g.all_finite()) throw NumericError("sgd_momentum_step: non-finite gradient in " + name);
  }
  for (const auto& [name, g] : grads) {
    auto& v = velocity.at(name).array();
    v = float(momentum) * v + g.array();
    params.at(name).array() -= float(lr) * v;
  }
}

std::string loss_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream os;
  os << "step,lr,total,cls,quality,reg,n_pos\n";
  char line[256];
  for (const auto& s : log) {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", static_cast<long long>(s.step), s.lr,
                  s.total, s.cls, s.quality, s.reg, s.n_pos);
    os << line;
  }
  return os.str();
}

SampleGrad sample_gradient(const SiamModel<float>& model, const TrainingPair& pair, const LossConfig& loss_cfg,
                           const AnchorConfig& anchors, const std::vector<std::string>& freeze) {
  const ModelConfig& mc = model.config();
  Tape<float> tape;
  const BoundParams p = model.bind(tape, freeze);
  const auto z = model.embed(tape, p, tape.constant(normalize_patch(pair.template_patch)), Branch::kTemplate);
  const auto x = model.embed(tape, p, tape.constant(normalize_patch(pair.search_patch)), Branch::kSearch);
  const HeadVars head = model.forward_heads(tape, p, z, x);

  const BBox* gt = pair.gt_in_search && !pair.is_negative ? &*pair.gt_in_search : nullptr;
  LossResult<float> loss;
  if (mc.head_kind == HeadKind::kAnchor) {
    loss = anchor_loss(tape, head, assign_anchor_targets(gt, anchors, mc.geometry()), loss_cfg);
  } else {
    const TargetMaps targets = gt ? assign_and_encode(*gt, mc.geometry(), {mc.quality_mode})
                                  : empty_targets(mc.geometry(), mc.quality_mode);
    loss = total_loss(tape, head, targets, loss_cfg);
  }
  SampleGrad out;
  out.report = loss.report;
  if (!std::isfinite(loss.report.total)) return out;
  tape.backward(loss.total);
  out.grads = tape.parameter_grads();
  return out;
}

namespace {

[[noreturn]] void diverge(const std::string& why, std::int64_t step, const std::vector<TrainingPair>& batch,
                          const TrainOptions& options) {
  std::string msg = "training diverged at step " + std::to_string(step) + ": " + why;
  if (!options.diagnostic_dir.empty()) {
    std::filesystem::create_directories(options.diagnostic_dir);
    const auto path = options.diagnostic_dir / ("diverged_step" + std::to_string(step) + ".pairs");
    save_pairs(batch, path);
    msg += "; batch written to " + path.string();
  }
  throw DivergedError(msg);
}

}  // namespace

TrainResult train(SiamModel<float> model, const std::vector<Sequence>& pool, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const SamplerConfig& sampler_cfg, const AnchorConfig& anchors,
                  const TrainOptions& options) {
  cfg.validate();
  loss_cfg.validate();
  const ModelConfig& mc = model.config();
  if (mc.head_kind == HeadKind::kAnchor && anchors.count() != mc.anchor_count)
    throw ConfigError("anchor config defines " + std::to_string(anchors.count()) + " anchors but the model has " +
                      std::to_string(mc.anchor_count));
  if (pool.empty() && cfg.total_steps() > 0) throw InvalidArgument("train: empty sequence pool");

  TrainResult result;
  for (const auto& [name, t] : model.parameters()) result.state.velocity.add(name, Tensor<float>::zeros_like(t));

  PairSampler sampler(pool, sampler_cfg, PairGeometry{mc.template_size, mc.search_size, 0.5}, cfg.seed);
  std::vector<TrainingPair> batch(size_t(cfg.batch_size));
  for (std::int64_t step = 0; step < cfg.total_steps(); ++step) {
    for (auto& pair : batch) pair = sampler.next();

    ParameterSet<float> grads;
    StepLog log;
    log.step = step;
    log.lr = lr_at(step, cfg);
    for (const auto& pair : batch) {
      SampleGrad sg;
      try {
        sg = sample_gradient(model, pair, loss_cfg, anchors, cfg.freeze);
      } catch (const NumericError& e) {
        diverge(e.what(), step, batch, options);
      }
      if (!std::isfinite(sg.report.total)) diverge("non-finite loss", step, batch, options);
      for (auto& [name, g] : sg.grads) {
        if (grads.contains(name))
          grads.at(name).array() += g.array();
        else
          grads.add(name, std::move(g));
      }
      log.total += sg.report.total;
      log.cls += sg.report.cls_term;
      log.quality += sg.report.quality_term;
      log.reg += sg.report.reg_term;
      log.n_pos += sg.report.n_pos;
    }
    const double inv = 1.0 / cfg.batch_size;
    for (auto& [name, g] : grads) g.array() *= float(inv);
    log.total *= inv;
    log.cls *= inv;
    log.quality *= inv;
    log.reg *= inv;

    try {
      sgd_momentum_step(model.parameters(), grads, result.state.velocity, log.lr, cfg.momentum);
    } catch (const NumericError& e) {
      diverge(e.what(), step, batch, options);
    }
    result.state.step = step + 1;
    result.log.push_back(log);
    if (options.on_step) options.on_step(log);
  }
  result.model = std::move(model);
  return result;
}

namespace {

void put_patch(io::Writer& w, const Patch& p) {
  w.put<std::uint8_t>(std::uint8_t(p.rank()));
  for (int d : p.shape()) w.put<std::uint32_t>(std::uint32_t(d));
  w.put_bytes(p.data(), sizeof(float) * size_t(p.size()));
}

Patch get_patch(io::Reader& r) {
  const auto rank = r.get<std::uint8_t>("patch rank");
  Shape shape;
  for (int i = 0; i < rank; ++i) shape.push_back(int(r.get<std::uint32_t>("patch dim")));
  Patch p(shape);
  std::memcpy(p.data(), r.take(sizeof(float) * size_t(p.size()), "patch data"), sizeof(float) * size_t(p.size()));
  return p;
}

constexpr char kPairMagic[4] = {'S', 'F', 'P', 'R'};

}  // namespace

void save_pairs(const std::vector<TrainingPair>& pairs, const std::filesystem::path& path) {
  io::Writer w;
  w.put_bytes(kPairMagic, 4);
  w.put<std::uint32_t>(std::uint32_t(pairs.size()));
  for (const auto& p : pairs) {
    w.put<std::uint8_t>(p.is_negative ? 1 : 0);
    w.put<std::int32_t>(p.template_frame);
    w.put<std::int32_t>(p.search_frame);
    w.put<std::uint8_t>(p.gt_in_search ? 1 : 0);
    const BBox b = p.gt_in_search.value_or(BBox{});
    for (double v : {b.x0, b.y0, b.x1, b.y1}) w.put<double>(v);
    put_patch(w, p.template_patch);
    put_patch(w, p.search_patch);
  }
  w.save(path);
}

std::vector<TrainingPair> load_pairs(const std::filesystem::path& path) {
  io::Reader r(path);
  if (std::memcmp(r.take(4, "magic"), kPairMagic, 4) != 0) r.fail("bad magic", 0);
  const auto n = r.get<std::uint32_t>("pair count");
  std::vector<TrainingPair> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    TrainingPair p;
    p.is_negative = r.get<std::uint8_t>("negative flag") != 0;
    p.template_frame = r.get<std::int32_t>("template frame");
    p.search_frame = r.get<std::int32_t>("search frame");
    const bool has_gt = r.get<std::uint8_t>("gt flag") != 0;
    BBox b;
    b.x0 = r.get<double>("gt");
    b.y0 = r.get<double>("gt");
    b.x1 = r.get<double>("gt");
    b.y1 = r.get<double>("gt");
    if (has_gt) p.gt_in_search = b;
    p.template_patch = get_patch(r);
    p.search_patch = get_patch(r);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sfpp
