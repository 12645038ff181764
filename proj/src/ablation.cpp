#include "sfpp/ablation.hpp"

#include <chrono>
#include <numeric>
#include <sstream>

namespace sfpp {

void ExperimentConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
  track.validate();
  if (!(failure_iou >= 0 && failure_iou < 1)) throw ConfigError("eval.failure_iou must be in [0,1)");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (anchors.count() < 1) throw ConfigError("anchor config must define at least one anchor");
}

const VariantResult& AblationResult::at(const std::string& name) const {
  for (const auto& v : variants)
    if (v.name == name) return v;
  throw InvalidArgument("no ablation variant named " + name);
}

std::string AblationResult::table_csv() const {
  std::ostringstream os;
  os << "variant,ao,sr50,sr75,precision20,failures,accuracy,ks\n";
  char line[256];
  for (const auto& v : variants) {
    const EvalReport& r = v.report;
    std::snprintf(line, sizeof line, "%s,%.4f,%.4f,%.4f,%.4f,%d,%.4f,%.4f\n", v.name.c_str(), r.ao, r.sr50, r.sr75,
                  r.precision20, r.failures, r.accuracy, v.scores.ks);
    os << line;
  }
  return os.str();
}

namespace {

double window_mean(const std::vector<StepLog>& log, bool head) {
  if (log.empty()) return 0;
  const size_t n = std::min<size_t>(100, log.size());
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += (head ? log[i] : log[log.size() - 1 - i]).total;
  return s / double(n);
}

}  // namespace

SiamModel<float> train_variant(const ExperimentConfig& cfg, const ModelConfig& model_cfg,
                               const std::vector<Sequence>& pool, VariantResult* info) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(SiamModel<float>::init(model_cfg, cfg.init_seed), pool, cfg.train, cfg.loss, cfg.sampler,
                        cfg.anchors);
  if (info) {
    info->train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    info->first_loss = window_mean(r.log, true);
    info->last_loss = window_mean(r.log, false);
  }
  return std::move(r.model);
}

VariantResult evaluate_variant(const std::string& name, const ResponseModel& model,
                               const std::vector<Sequence>& held_out, const PostprocConfig& track,
                               double failure_iou, int jobs) {
  const BenchmarkRun run = run_benchmark(model, held_out, track, jobs);
  VariantResult v;
  v.name = name;
  v.report = run.overall;
  v.scores = run.score_split(failure_iou);

  std::vector<BBox> pred, anchors, gt;
  std::vector<bool> success;
  for (size_t s = 0; s < run.sequences.size(); ++s) {
    const auto& frames = run.sequences[s].output.frames;
    for (size_t t = 1; t < frames.size(); ++t) {
      if (!frames[t].telemetry.anchor_box) continue;
      pred.push_back(frames[t].box);
      anchors.push_back(*frames[t].telemetry.anchor_box);
      gt.push_back(held_out[s].gt[t]);
      success.push_back(run.sequences[s].ious[t - 1] > failure_iou);
    }
  }
  if (!pred.empty()) v.anchor_iou = anchor_iou_analysis(pred, anchors, gt, success);
  return v;
}

AblationResult run_ablation(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  const auto pool = make_pool(cfg.world, false);
  const auto held_out = make_pool(cfg.world, true);
  AblationResult result;

  ModelConfig pss = cfg.model;
  pss.head_kind = HeadKind::kPerPixel;
  pss.quality_mode = QualityMode::kPss;
  say("evaluating untrained model");
  result.variants.push_back(evaluate_variant("untrained", NetworkResponse(SiamModel<float>::init(pss, cfg.init_seed)),
                                             held_out, cfg.track, cfg.failure_iou, cfg.jobs));

  auto run_per_pixel = [&](QualityMode mode, const std::string& name) {
    ModelConfig mc = pss;
    mc.quality_mode = mode;
    say("training " + name);
    VariantResult info;
    const NetworkResponse net(train_variant(cfg, mc, pool, &info));
    say("tracking " + name);
    VariantResult v = evaluate_variant(name, net, held_out, cfg.track, cfg.failure_iou, cfg.jobs);
    v.train_seconds = info.train_seconds;
    v.first_loss = info.first_loss;
    v.last_loss = info.last_loss;
    result.variants.push_back(v);
    return net;
  };

  {
    const NetworkResponse net = run_per_pixel(QualityMode::kPss, "pss");
    PostprocConfig cls_only = cfg.track;
    cls_only.use_quality = false;
    say("tracking pss_cls_only");
    VariantResult v = evaluate_variant("pss_cls_only", net, held_out, cls_only, cfg.failure_iou, cfg.jobs);
    v.train_seconds = result.variants.back().train_seconds;
    v.first_loss = result.variants.back().first_loss;
    v.last_loss = result.variants.back().last_loss;
    result.variants.push_back(v);
  }
  run_per_pixel(QualityMode::kIou, "iou");
  run_per_pixel(QualityMode::kNone, "none");

  ModelConfig anchor = pss;
  anchor.head_kind = HeadKind::kAnchor;
  anchor.quality_mode = QualityMode::kNone;
  anchor.anchor_count = cfg.anchors.count();
  say("training anchor");
  VariantResult info;
  const NetworkResponse net(train_variant(cfg, anchor, pool, &info), cfg.anchors);
  say("tracking anchor");
  VariantResult v = evaluate_variant("anchor", net, held_out, cfg.track, cfg.failure_iou, cfg.jobs);
  v.train_seconds = info.train_seconds;
  v.first_loss = info.first_loss;
  v.last_loss = info.last_loss;
  result.variants.push_back(v);
  return result;
}

}  // namespace sfpp
