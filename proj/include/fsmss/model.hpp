// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <complex>
#include <random>
#include <vector>

#include "fsmss/layers.hpp"

namespace fsmss {

struct UNetConfig {
  int depth = 6;
  int base_channels = 16;
  int kernel = 5;
  int stride = 2;
  double leaky_slope = 0.2;
  int in_freq = 512;
  int in_frames = 256;
  /// Network input is the compressed magnitude: one channel.
  int in_channels = 1;
  double bn_momentum = 0.99;

  int channels(int layer) const { return base_channels << layer; }
  int bottleneck_channels() const { return channels(depth - 1); }
  void validate() const;

  bool operator==(const UNetConfig&) const = default;
};

/// Per-channel FiLM scale and shift for one example.
struct FilmParams {
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// out[c, f, t] = gamma[c] * features[c, f, t] + beta[c] for one example
/// stored as [C x F x T].
std::vector<double> film(const std::vector<double>& features, int channels, const FilmParams& params);

/// Batched FiLM: x [N, C, H, W], gamma/beta [N x C].
template <typename T>
Tensor<T> film(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

/// Sigmoid-bounded magnitude with the phase of (a, b). The magnitude is
/// sigmoid(r), r = sqrt(a^2 + b^2 + kMaskEpsilon); exactly (0, 0) maps to 0.5 + 0i.
inline constexpr double kMaskEpsilon = 1e-12;
std::complex<double> mask_value(double a, double b);
/// Vector-Jacobian product of mask_value: given d/dRe and d/dIm of the mask,
/// returns d/da and d/db.
std::array<double, 2> mask_value_vjp(double a, double b, std::complex<double> grad);

/// Two affine heads z -> gamma and z -> beta. Weights start at zero with
/// gamma bias one, so a fresh generator is the identity modulation.
template <typename T>
class FilmGenerator {
 public:
  FilmGenerator() = default;
  FilmGenerator(int cond_dim, int channels);

  void init();
  /// z [N x D] -> gamma, beta [N x C].
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& z);
  Tensor<T> backward(const Tensor<T>& grad_gamma, const Tensor<T>& grad_beta);
  void collect(nn::ParamRefs<T>& refs);

  int input_dim() const { return gamma_head_.in_features(); }
  int channels() const { return gamma_head_.out_features(); }

  nn::Linear<T>& gamma_head() { return gamma_head_; }
  nn::Linear<T>& beta_head() { return beta_head_; }

 private:
  nn::Linear<T> gamma_head_;
  nn::Linear<T> beta_head_;
};

/// Conditioned U-Net producing the raw two-channel mask logits.
template <typename T>
class UNet {
 public:
  UNet() = default;
  explicit UNet(const UNetConfig& cfg);

  void init(std::mt19937_64& rng);
  /// x [N, in_channels, in_freq, in_frames]; gamma/beta [N x bottleneck].
  /// Returns [N, 2, in_freq, in_frames].
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, bool training);
  /// Returns gradients w.r.t. gamma and beta; accumulates parameter gradients.
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& grad_out);
  void collect(nn::ParamRefs<T>& refs);

  const UNetConfig& config() const { return cfg_; }
  void set_recalibration(bool on);
  /// Activation shapes [C, H, W] of every encoder layer from the last forward pass.
  const std::vector<std::array<int, 3>>& encoder_shapes() const { return enc_shapes_; }
  /// Input channel count of each decoder layer, outermost (mask) layer first.
  std::vector<int> decoder_input_channels() const;
  /// Bottleneck activation before/after FiLM from the last forward pass.
  const Tensor<T>& bottleneck() const { return bottleneck_; }
  const Tensor<T>& modulated_bottleneck() const { return modulated_; }

 private:
  UNetConfig cfg_;
  std::vector<nn::Conv2d<T>> enc_conv_;
  std::vector<nn::BatchNorm2d<T>> enc_bn_;
  std::vector<nn::LeakyRelu<T>> enc_act_;
  // Index j produces the resolution of encoder layer j - 1 (j = 0: the mask).
  std::vector<nn::ConvTranspose2d<T>> dec_conv_;
  std::vector<nn::BatchNorm2d<T>> dec_bn_;
  std::vector<nn::LeakyRelu<T>> dec_act_;

  std::vector<std::array<int, 3>> enc_shapes_;
  Tensor<T> bottleneck_, modulated_, gamma_, beta_;
  bool training_ = false;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first);

}  // namespace fsmss
