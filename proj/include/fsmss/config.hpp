// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "fsmss/data.hpp"
#include "fsmss/eval.hpp"
#include "fsmss/optim.hpp"
#include "fsmss/separator.hpp"

namespace fsmss {

struct TrainingConfig {
  ConditioningMode mode = ConditioningMode::kFewShot;
  int batch_size = 16;
  AdamConfig adam;
  long max_steps = 100000;
  int validate_every = 200;
  /// Validations without improvement before stopping.
  int patience = 10;
  double validation_fraction = 0.1;
  int validation_batches = 4;
  /// Training batches used to re-estimate BatchNorm statistics before validation.
  int bn_calibration_batches = 8;
  int log_every = 10;

  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

struct PathsConfig {
  std::string corpus_dir = "corpus";
  std::string out_dir = "run";
  /// Optional stem-name mapping table; defaults to the vocabulary names.
  std::string mapping_file;

  bool operator==(const PathsConfig&) const = default;
};

/// Everything a run needs, read from one JSON file. Unknown keys are errors.
struct RunConfig {
  int sample_rate = 22050;
  double chunk_seconds = 3.0;
  InstrumentVocabulary vocabulary;
  StftConfig stft;
  UNetConfig unet;
  EncoderConfig encoder;
  LossConfig loss;
  SamplerConfig sampler;
  TrainingConfig training;
  EvalProtocol eval;
  SynthSpec synth = SynthSpec::three_class();
  PathsConfig paths;
  /// Model initialisation and batch sampling.
  std::uint64_t seed = 0;

  SeparatorConfig separator() const;
  void validate() const;

  static RunConfig parse(const std::string& json_text);
  static RunConfig load(const std::filesystem::path& path);
  std::string dump() const;

  bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const StftConfig& c);
void from_json(const nlohmann::json& j, StftConfig& c);
void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
void to_json(nlohmann::json& j, const SynthClass& c);
void from_json(const nlohmann::json& j, SynthClass& c);
void to_json(nlohmann::json& j, const SynthSpec& c);
void from_json(const nlohmann::json& j, SynthSpec& c);
void to_json(nlohmann::json& j, const EvalProtocol& c);
void from_json(const nlohmann::json& j, EvalProtocol& c);
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);
void to_json(nlohmann::json& j, const PathsConfig& c);
void from_json(const nlohmann::json& j, PathsConfig& c);
void to_json(nlohmann::json& j, const SeparatorConfig& c);
void from_json(const nlohmann::json& j, SeparatorConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

}  // namespace fsmss
