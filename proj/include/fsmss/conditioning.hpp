// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "fsmss/dsp.hpp"
#include "fsmss/layers.hpp"

namespace fsmss {

/// Ordered instrument class names; the index is the one-hot position.
class InstrumentVocabulary {
 public:
  InstrumentVocabulary();  // the default 18-class vocabulary
  explicit InstrumentVocabulary(std::vector<std::string> names);

  static InstrumentVocabulary from_text(const std::string& text);  // one name per line, '#' comments
  static InstrumentVocabulary load(const std::string& path);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  bool contains(const std::string& name) const;
  /// Throws an Error listing the vocabulary when the name is unknown.
  int index_of(const std::string& name) const;
  std::string joined() const;

  bool operator==(const InstrumentVocabulary&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class VectorKind { kClass, kEmbedding };

struct ConditioningVector {
  std::vector<double> values;
  VectorKind kind = VectorKind::kEmbedding;

  int dim() const { return static_cast<int>(values.size()); }
};

ConditioningVector one_hot(const std::string& class_name, const InstrumentVocabulary& vocab);
/// Element-wise mean of embedding vectors.
ConditioningVector aggregate(const std::vector<ConditioningVector>& vectors);

struct EncoderConfig {
  int blocks = 4;
  int filters = 64;
  int kernel = 3;
  int input_bands = 128;
  double fmin = 0.0;
  double fmax = 11025.0;
  /// Shortest accepted conditioning example.
  double min_seconds = 0.5;
  double bn_momentum = 0.99;

  int embedding_dim() const { return filters * (input_bands >> blocks); }
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Triangular mel filters on the Slaney mel scale with area normalisation.
class MelFilterbank {
 public:
  MelFilterbank() = default;
  MelFilterbank(int bands, int fft_size, int sample_rate, double fmin, double fmax);

  int bands() const { return static_cast<int>(start_.size()); }
  /// Power-free projection of a magnitude column of fft_size/2+1 bins.
  void apply(const double* magnitude, double* out) const;
  /// Weight of frequency bin `bin` in band `band`.
  double weight(int band, int bin) const;

 private:
  std::vector<int> start_;
  std::vector<std::vector<double>> weights_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// log1p-compressed mel magnitude features, band-major [bands x frames].
struct MelFeatures {
  int bands = 0;
  int frames = 0;
  std::vector<double> data;
};

MelFeatures mel_features(const AudioClip& clip, const StftConfig& stft_cfg, const MelFilterbank& bank);

/// Few-shot conditioning encoder: blocks of conv3x3 -> batch-norm -> ReLU ->
/// 2x2 max-pool, then a max over time and a channel-major flatten.
template <typename T>
class ConditioningEncoder {
 public:
  ConditioningEncoder() = default;
  explicit ConditioningEncoder(const EncoderConfig& cfg);

  void init(std::mt19937_64& rng);
  /// x [N, 1, bands, frames] -> [N x embedding_dim].
  Tensor<T> forward(const Tensor<T>& x, bool training);
  void backward(const Tensor<T>& grad_out);
  void collect(nn::ParamRefs<T>& refs);

  const EncoderConfig& config() const { return cfg_; }
  void set_recalibration(bool on);

 private:
  EncoderConfig cfg_;
  std::vector<nn::Conv2d<T>> conv_;
  std::vector<nn::BatchNorm2d<T>> bn_;
  std::vector<nn::LeakyRelu<T>> act_;
  std::vector<nn::MaxPool2x2<T>> pool_;
  nn::GlobalTimeMax<T> time_max_;
};

/// Concatenate [pos, neg] and map back to the embedding width through a
/// fully connected layer with ReLU.
template <typename T>
class PosNegFusion {
 public:
  PosNegFusion() = default;
  explicit PosNegFusion(int dim);

  void init(std::mt19937_64& rng);
  /// pos, neg [N x D] -> [N x D]
  Tensor<T> forward(const Tensor<T>& pos, const Tensor<T>& neg);
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& grad_out);
  void collect(nn::ParamRefs<T>& refs);

  int dim() const { return fc_.out_features(); }

 private:
  nn::Linear<T> fc_;
  nn::LeakyRelu<T> relu_{T(0)};
};

}  // namespace fsmss
