// SPDX-License-Identifier: Apache-2.0
#include "fsmss/train.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace fsmss {

using nlohmann::json;

BatchItem make_batch_item(const TrainingExample& ex, Separator<float>& model) {
  BatchItem item;
  item.mixture = ex.mixture;
  item.target = ex.target;
  const auto& cfg = model.config();
  if (cfg.vocabulary.contains(ex.target_class)) item.class_index = cfg.vocabulary.index_of(ex.target_class);
  if (cfg.mode == ConditioningMode::kClass) {
    if (item.class_index < 0)
      throw Error("target class '" + ex.target_class + "' is not in the vocabulary: " + cfg.vocabulary.joined());
    return item;
  }
  for (const auto& p : ex.positives) item.positives.push_back(model.features(p));
  if (cfg.mode == ConditioningMode::kFewShotNeg)
    for (const auto& n : ex.negatives) item.negatives.push_back(model.features(n));
  return item;
}

Trainer::Trainer(const SeparatorConfig& model_cfg, const TrainingConfig& train_cfg, const SamplerConfig& sampler_cfg,
                 const LossConfig& loss_cfg, Corpus train, Corpus validation, std::uint64_t seed)
    : cfg_(train_cfg),
      sampler_(sampler_cfg),
      loss_(loss_cfg),
      train_(std::move(train)),
      validation_(std::move(validation)),
      model_(model_cfg),
      adam_(train_cfg.adam) {
  cfg_.validate();
  if (cfg_.mode != model_cfg.mode) throw Error("training mode and model mode differ");
  if (train_.empty()) throw Error("training corpus is empty");
  sampler_.use_negatives = model_cfg.mode == ConditioningMode::kFewShotNeg;
  sampler_.chunk_seconds = model_cfg.chunk_seconds;
  sampler_.validate();
  model_.init(seed);

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sampler_.rng_seed), static_cast<std::uint32_t>(sampler_.rng_seed >> 32)};
  rng_.seed(seq);
  std::mt19937_64 val_rng(sampler_.rng_seed ^ 0x9e3779b97f4a7c15ull);
  if (!validation_.empty()) {
    std::swap(train_, validation_);
    for (int i = 0; i < cfg_.validation_batches; ++i) validation_batches_.push_back(sample_batch(val_rng));
    std::swap(train_, validation_);
  }
  std::mt19937_64 cal_rng(sampler_.rng_seed ^ 0xc2b2ae3d27d4eb4full);
  for (int i = 0; i < cfg_.bn_calibration_batches; ++i) calibration_batches_.push_back(sample_batch(cal_rng));
}

std::vector<BatchItem> Trainer::sample_batch(std::mt19937_64& rng) {
  std::vector<BatchItem> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
  for (int i = 0; i < cfg_.batch_size; ++i)
    batch.push_back(make_batch_item(sample_training_example(train_, sampler_, rng), model_));
  return batch;
}

void Trainer::resume(const Checkpoint& ckpt) {
  if (!(ckpt.config == model_.config())) throw Error("checkpoint configuration differs from the run configuration");
  model_.load_state(ckpt.tensors);
  auto refs = model_.parameters();
  adam_.load_state(ckpt.tensors, refs);
  adam_.set_steps(ckpt.meta.optimizer_steps);
  meta_ = ckpt.meta;
  if (!meta_.rng_state.empty()) {
    std::istringstream in(meta_.rng_state);
    in >> rng_;
    if (!in) throw Error("checkpoint has a corrupt sampler state");
  }
}

BatchLoss Trainer::step() {
  const auto batch = sample_batch(rng_);
  model_.zero_grad();
  const BatchLoss loss = model_.forward_backward(batch, loss_);
  if (!std::isfinite(loss.total)) throw Error("training diverged at step " + std::to_string(meta_.step + 1));
  auto refs = model_.parameters();
  adam_.step(refs);
  ++meta_.step;
  meta_.optimizer_steps = adam_.steps();
  return loss;
}

void Trainer::recalibrate() { model_.recalibrate_batchnorm(calibration_batches_); }

double Trainer::validation_loss() {
  if (validation_batches_.empty()) throw Error("no validation data");
  recalibrate();
  double total = 0.0;
  for (const auto& b : validation_batches_) total += model_.evaluate_loss(b, loss_).total;
  return total / static_cast<double>(validation_batches_.size());
}

Checkpoint Trainer::checkpoint() {
  std::ostringstream rng_state;
  rng_state << rng_;
  meta_.rng_state = rng_state.str();
  Checkpoint c = make_checkpoint(model_, meta_);
  for (auto& [name, t] : adam_.state()) c.tensors.emplace(name, std::move(t));
  return c;
}

TrainResult Trainer::run(const std::optional<std::filesystem::path>& out_dir, std::ostream* log) {
  auto emit = [&](const json& j) {
    if (log) *log << j.dump() << "\n" << std::flush;
  };
  if (out_dir && best_state_.empty() && meta_.step > 0 && std::filesystem::exists(*out_dir / "best.ckpt"))
    best_state_ = load_checkpoint(*out_dir / "best.ckpt").tensors;

  TrainResult result;
  const bool can_validate = !validation_batches_.empty();
  while (meta_.step < cfg_.max_steps) {
    const BatchLoss loss = step();
    result.losses.push_back(loss.total);
    if (meta_.step % cfg_.log_every == 0)
      emit({{"event", "step"},          {"step", meta_.step},          {"loss", loss.total},
            {"sdr", loss.sdr_term},     {"mae", loss.mag_mae_term}, {"skipped_sdr", loss.skipped_sdr}});

    if (can_validate && meta_.step % cfg_.validate_every == 0) {
      const double v = validation_loss();
      result.validations.emplace_back(meta_.step, v);
      const bool improved = v < meta_.best_validation;
      if (improved) {
        meta_.best_validation = v;
        meta_.best_step = meta_.step;
        meta_.stale_validations = 0;
        best_state_ = model_.state();
      } else {
        ++meta_.stale_validations;
      }
      emit({{"event", "validation"}, {"step", meta_.step}, {"loss", v}, {"best", meta_.best_validation},
            {"improved", improved}});
      if (out_dir) {
        const Checkpoint c = checkpoint();
        save_checkpoint(*out_dir / "last.ckpt", c);
        if (improved) save_checkpoint(*out_dir / "best.ckpt", c);
      }
      if (meta_.stale_validations >= cfg_.patience) {
        result.early_stopped = true;
        emit({{"event", "early_stop"}, {"step", meta_.step}, {"best_step", meta_.best_step}});
        break;
      }
    }
  }
  if (!can_validate) recalibrate();
  if (out_dir) save_checkpoint(*out_dir / "last.ckpt", checkpoint());
  if (!best_state_.empty()) model_.load_state(best_state_);
  result.steps = meta_.step;
  result.best_step = meta_.best_step;
  result.best_validation = meta_.best_validation;
  emit({{"event", "done"}, {"step", meta_.step}, {"best_step", meta_.best_step}, {"early_stopped", result.early_stopped}});
  return result;
}

}  // namespace fsmss
