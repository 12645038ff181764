#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sfpp/benchmark.hpp"
#include "sfpp/train.hpp"

namespace sfpp {

struct ExperimentConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  SamplerConfig sampler;
  WorldConfig world;
  PostprocConfig track;
  AnchorConfig anchors;
  std::uint64_t init_seed = 1;
  // Scored frames with IoU <= this count as failures in the score split;
  // 0 is the zero-overlap failure rule.
  double failure_iou = 0.0;
  int jobs = 1;

  void validate() const;
};

struct VariantResult {
  std::string name;
  EvalReport report;
  SplitHistograms scores;
  std::optional<AnchorIouAnalysis> anchor_iou;
  double train_seconds = 0;
  double first_loss = 0, last_loss = 0;  // mean total loss over the first / last 100 steps
};

struct AblationResult {
  std::vector<VariantResult> variants;
  const VariantResult& at(const std::string& name) const;
  // One row per variant: name, ao, sr50, sr75, precision20, failures, accuracy, ks.
  std::string table_csv() const;
};

using Progress = std::function<void(const std::string&)>;

SiamModel<float> train_variant(const ExperimentConfig& cfg, const ModelConfig& model_cfg,
                               const std::vector<Sequence>& pool, VariantResult* info = nullptr);

VariantResult evaluate_variant(const std::string& name, const ResponseModel& model,
                               const std::vector<Sequence>& held_out, const PostprocConfig& track,
                               double failure_iou, int jobs);

// Untrained, PSS (fused and cls-only selection), IoU, no-quality and anchor
// variants, all on the same data and seeds.
AblationResult run_ablation(const ExperimentConfig& cfg, const Progress& progress = {});

}  // namespace sfpp
