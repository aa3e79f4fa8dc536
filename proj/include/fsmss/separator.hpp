// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsmss/conditioning.hpp"
#include "fsmss/loss.hpp"
#include "fsmss/model.hpp"

namespace fsmss {

enum class ConditioningMode { kClass, kFewShot, kFewShotNeg };

std::string to_string(ConditioningMode m);
ConditioningMode conditioning_mode_from_string(const std::string& s);

/// Everything that determines the architecture and the signal pipeline.
struct SeparatorConfig {
  ConditioningMode mode = ConditioningMode::kFewShot;
  UNetConfig unet;
  EncoderConfig encoder;
  StftConfig stft;
  InstrumentVocabulary vocabulary;
  int sample_rate = 22050;
  double chunk_seconds = 3.0;

  std::size_t chunk_samples() const;
  /// Width of the vector fed to the FiLM generator.
  int conditioning_dim() const;
  void validate() const;

  bool operator==(const SeparatorConfig&) const = default;
};

/// One training item with its conditioning material already featurised.
struct BatchItem {
  AudioClip mixture;
  AudioClip target;
  int class_index = -1;
  std::vector<MelFeatures> positives;
  std::vector<MelFeatures> negatives;
};

struct BatchLoss {
  double total = 0.0;
  double sdr_term = 0.0;
  double mag_mae_term = 0.0;
  int skipped_sdr = 0;
};

/// The complete conditioned separator: U-Net, FiLM generator and, depending
/// on the mode, the few-shot encoder and positive/negative fusion.
template <typename T>
class Separator {
 public:
  explicit Separator(SeparatorConfig cfg);

  /// Random initialisation from a seed (FiLM heads start as identity).
  void init(std::uint64_t seed);

  const SeparatorConfig& config() const { return cfg_; }
  nn::ParamRefs<T> parameters();

  /// Copies named tensors into the model; every parameter and buffer must be
  /// present with a matching shape.
  void load_state(const std::map<std::string, Tensor<float>>& tensors);
  std::map<std::string, Tensor<float>> state() ;

  // Conditioning (inference mode).
  ConditioningVector condition_on_class(const std::string& name) const;
  ConditioningVector encode_example(const AudioClip& example);
  ConditioningVector fuse(const ConditioningVector& pos, const ConditioningVector& neg);
  /// Encode, average and (in few-shot+neg mode) fuse.
  ConditioningVector condition_on_examples(const std::vector<AudioClip>& positives,
                                           const std::vector<AudioClip>& negatives = {});
  /// Raw film parameters for a conditioning vector.
  FilmParams film_parameters(const ConditioningVector& z);
  /// Throws unless z is valid input for the FiLM generator in this mode.
  void check_conditioning(const ConditioningVector& z) const;

  /// Mask for a compressed spectrogram (cropped to the network input size).
  ComplexMask unet_forward(const ComplexSpectrogram& compressed, const ConditioningVector& z);
  /// Full chunk pipeline; input shorter than a chunk is zero-padded and the
  /// output has the input length.
  AudioClip separate_chunk(const AudioClip& mixture, const ConditioningVector& z);

  MelFeatures features(const AudioClip& clip) const;

  /// Training-mode forward and backward over a batch. Gradients are
  /// accumulated (call zero_grad first); returns mean losses.
  BatchLoss forward_backward(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg);
  /// Inference-mode loss without gradients.
  BatchLoss evaluate_loss(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg);
  void zero_grad();
  /// Recomputes the batch-norm running statistics as the average of the
  /// training-mode batch statistics over `batches`, without touching weights.
  void recalibrate_batchnorm(const std::vector<std::vector<BatchItem>>& batches);

  UNet<T>& unet() { return unet_; }
  FilmGenerator<T>& film_generator() { return film_; }
  ConditioningEncoder<T>& encoder() { return encoder_; }
  PosNegFusion<T>& fusion() { return fusion_; }

 private:
  struct Prepared {
    ComplexSpectrogram compressed;
    Tensor<T> input;  // [1, 1, F, T]
  };
  Prepared prepare(const AudioClip& mixture) const;
  Tensor<T> conditioning_tensor(const std::vector<BatchItem>& batch, bool training);
  BatchLoss run_batch(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg, bool training,
                      bool backward);

  SeparatorConfig cfg_;
  UNet<T> unet_;
  FilmGenerator<T> film_;
  ConditioningEncoder<T> encoder_;
  PosNegFusion<T> fusion_;
  MelFilterbank mel_;
};

/// Decompress-and-resynthesise the masked compressed spectrogram; the network
/// covers the first F bins and T frames, everything else is zero.
AudioClip reconstruct(const ComplexSpectrogram& compressed, const ComplexMask& mask);

}  // namespace fsmss
