// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "fsmss/checkpoint.hpp"
#include "fsmss/config.hpp"

namespace fsmss {

struct TrainResult {
  long steps = 0;
  long best_step = 0;
  double best_validation = 0.0;
  bool early_stopped = false;
  /// Mean batch loss of every step run in this call.
  std::vector<double> losses;
  std::vector<std::pair<long, double>> validations;
};

/// Converts a sampled example into a network batch item.
BatchItem make_batch_item(const TrainingExample& ex, Separator<float>& model);

/// Single-writer training loop with periodic validation and early stopping.
class Trainer {
 public:
  Trainer(const SeparatorConfig& model_cfg, const TrainingConfig& train_cfg, const SamplerConfig& sampler_cfg,
          const LossConfig& loss_cfg, Corpus train, Corpus validation, std::uint64_t seed);

  /// Continues from a checkpoint written by this trainer (step counter,
  /// optimiser moments, sampler stream and early-stopping state).
  void resume(const Checkpoint& ckpt);

  /// Trains until training.max_steps total steps or early stop, then restores
  /// the best validated parameters. With out_dir set, writes best.ckpt and
  /// last.ckpt there; log records go to `log` when given.
  TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt, std::ostream* log = nullptr);

  /// One optimisation step on a freshly sampled batch; returns the batch loss.
  BatchLoss step();
  /// Re-estimates BatchNorm running statistics on fixed training batches.
  void recalibrate();
  double validation_loss();

  Separator<float>& model() { return model_; }
  const TrainingMeta& meta() const { return meta_; }
  Checkpoint checkpoint();

 private:
  std::vector<BatchItem> sample_batch(std::mt19937_64& rng);

  TrainingConfig cfg_;
  SamplerConfig sampler_;
  LossConfig loss_;
  Corpus train_;
  Corpus validation_;
  Separator<float> model_;
  Adam<float> adam_;
  std::mt19937_64 rng_;
  TrainingMeta meta_;
  std::vector<std::vector<BatchItem>> validation_batches_;
  std::vector<std::vector<BatchItem>> calibration_batches_;
  std::map<std::string, Tensor<float>> best_state_;
};

}  // namespace fsmss
