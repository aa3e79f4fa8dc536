// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>

#include "fsmss/separator.hpp"

namespace fsmss {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
  long step = 0;
  long best_step = 0;
  double best_validation = std::numeric_limits<double>::infinity();
  int stale_validations = 0;
  long optimizer_steps = 0;
  /// Serialised sampler generator so a resumed run continues the same stream.
  std::string rng_state;

  bool operator==(const TrainingMeta&) const = default;
};

/// Model configuration, training metadata and named float32 tensors
/// (parameters, buffers and optionally "adam.m/..." / "adam.v/..." moments).
struct Checkpoint {
  SeparatorConfig config;
  TrainingMeta meta;
  std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Validates the header, the tensor payload and every shape against the config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(Separator<T>& model, const TrainingMeta& meta = {});
/// Builds the model described by the checkpoint and loads its state.
template <typename T>
Separator<T> instantiate(const Checkpoint& ckpt);

}  // namespace fsmss
