// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fsmss/audio.hpp"

namespace fsmss {

/// Dense NCHW tensor. Lower-rank data uses trailing ones (e.g. a [N x D]
/// matrix is {N, D, 1, 1}).
template <typename T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n, int c, int h = 1, int w = 1, T fill = T(0))
      : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape[2]) * shape[3]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * plane(); }

  T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const T* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  T& at(int i, int ch, int y, int x) { return data[((static_cast<std::size_t>(i) * shape[1] + ch) * shape[2] + y) * shape[3] + x]; }
  const T& at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool operator==(const Tensor&) const = default;
};

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  return "[" + std::to_string(t.n()) + "x" + std::to_string(t.c()) + "x" + std::to_string(t.h()) + "x" +
         std::to_string(t.w()) + "]";
}

/// A learnable tensor and its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value) { grad.zero(); }
};

/// Non-learnable persistent state (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* value = nullptr;
};

}  // namespace fsmss
