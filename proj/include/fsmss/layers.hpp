// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "fsmss/tensor.hpp"

namespace fsmss::nn {

template <typename T>
struct ParamRefs {
  std::vector<Param<T>*> params;
  std::vector<Buffer<T>> buffers;
};

/// Square-kernel 2-D convolution geometry shared by Conv2d and its transpose.
struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, ConvGeometry geom);

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x);
  /// Accumulates parameter gradients; returns the input gradient unless
  /// need_input_grad is false (then an empty tensor).
  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true);
  void collect(ParamRefs<T>& refs);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  Param<T> weight;  // [out, in * k * k]
  Param<T> bias;    // [out]

 private:
  int in_ch_ = 0, out_ch_ = 0;
  ConvGeometry geom_;
  Tensor<T> input_;
};

/// Transposed convolution: the adjoint of a Conv2d with the same geometry,
/// plus output_padding extra rows/cols so that stride-2 layers exactly double.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_ch, int out_ch, ConvGeometry geom, int output_padding);

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamRefs<T>& refs);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  Param<T> weight;  // [in, out * k * k]
  Param<T> bias;    // [out]

 private:
  int in_ch_ = 0, out_ch_ = 0;
  ConvGeometry geom_;
  int output_padding_ = 0;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, double momentum = 0.99, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamRefs<T>& refs);

  /// Between begin and end, training-mode forwards replace the running
  /// statistics by the plain average over the batches seen.
  void begin_recalibration();
  void end_recalibration() { recalibrated_ = -1; }

  Param<T> scale;
  Param<T> shift;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  std::string name_;
  int channels_ = 0;
  double momentum_ = 0.99;
  double eps_ = 1e-5;
  bool last_training_ = false;
  int recalibrated_ = -1;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out);

  void init(std::mt19937_64& rng);
  /// x: [N x in] -> [N x out].
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamRefs<T>& refs);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;  // [out, in]
  Param<T> bias;    // [out]

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> input_;
};

/// Leaky ReLU (slope 0 gives plain ReLU). Caches its input.
template <typename T>
class LeakyRelu {
 public:
  explicit LeakyRelu(T slope = T(0)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  T slope_;
  Tensor<T> input_;
};

/// 2x2 max pooling with stride 2 (floor on odd sizes).
template <typename T>
class MaxPool2x2 {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  std::array<int, 4> in_shape_{};
  std::vector<std::size_t> argmax_;
};

/// Max over the last (time) axis: [N, C, H, W] -> [N, C*H] flattened channel-major.
template <typename T>
class GlobalTimeMax {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  std::array<int, 4> in_shape_{};
  std::vector<std::size_t> argmax_;
};

}  // namespace fsmss::nn
