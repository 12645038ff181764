#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sfpp/anchor.hpp"
#include "sfpp/loss.hpp"
#include "sfpp/model.hpp"
#include "sfpp/synth_world.hpp"

namespace sfpp {

struct TrainConfig {
  double base_lr = 2e-3;
  double warmup_start_lr = 1e-7;
  int warmup_epochs = 1;
  int total_epochs = 6;
  int pairs_per_epoch = 2000;
  double momentum = 0.9;
  int batch_size = 8;
  std::uint64_t seed = 1;
  std::vector<std::string> freeze;

  int steps_per_epoch() const { return pairs_per_epoch / batch_size; }
  std::int64_t total_steps() const { return std::int64_t(total_epochs) * steps_per_epoch(); }
  std::int64_t warmup_steps() const { return std::int64_t(warmup_epochs) * steps_per_epoch(); }
  void validate() const;
};

// Linear warmup from warmup_start_lr to base_lr, then cosine annealing.
double lr_at(std::int64_t step, const TrainConfig& cfg);

// v <- momentum*v + g; p <- p - lr*v. A non-finite gradient throws before
// anything is modified.
void sgd_momentum_step(ParameterSet<float>& params, const ParameterSet<float>& grads,
                       ParameterSet<float>& velocity, double lr, double momentum);

struct StepLog {
  std::int64_t step = 0;
  double lr = 0;
  double total = 0, cls = 0, quality = 0, reg = 0;  // batch means
  int n_pos = 0;                                    // summed over the batch
};

std::string loss_log_csv(const std::vector<StepLog>& log);

struct TrainState {
  ParameterSet<float> velocity;
  std::int64_t step = 0;
};

struct TrainResult {
  SiamModel<float> model;
  TrainState state;
  std::vector<StepLog> log;
};

struct TrainOptions {
  // Where the offending batch is written when the loss goes non-finite.
  std::filesystem::path diagnostic_dir;
  std::function<void(const StepLog&)> on_step;
};

// Loss and parameter gradients for one pair. Frozen parameters get no entry.
struct SampleGrad {
  LossReport report;
  std::vector<std::pair<std::string, Tensor<float>>> grads;
};

SampleGrad sample_gradient(const SiamModel<float>& model, const TrainingPair& pair, const LossConfig& loss_cfg,
                           const AnchorConfig& anchors, const std::vector<std::string>& freeze);

// Fully deterministic given (model, pool, configs): pairs come from one
// PairSampler seeded with cfg.seed and are consumed in order.
TrainResult train(SiamModel<float> model, const std::vector<Sequence>& pool, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const SamplerConfig& sampler_cfg, const AnchorConfig& anchors = {},
                  const TrainOptions& options = {});

// Binary pair dump used for divergence diagnostics.
void save_pairs(const std::vector<TrainingPair>& pairs, const std::filesystem::path& path);
std::vector<TrainingPair> load_pairs(const std::filesystem::path& path);

}  // namespace sfpp
