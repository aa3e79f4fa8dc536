// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "fsmss/layers.hpp"

namespace fsmss {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(nn::ParamRefs<T>& refs) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : refs.params) {
      auto& [m, v] = moments(*p);
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.data[i];
        m.data[i] = static_cast<T>(cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g);
        v.data[i] = static_cast<T>(cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g);
        const double mhat = m.data[i] / c1, vhat = v.data[i] / c2;
        p->value.data[i] -= static_cast<T>(cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

  /// Moments as "adam.m/<param>" and "adam.v/<param>".
  std::map<std::string, Tensor<float>> state() const {
    std::map<std::string, Tensor<float>> out;
    for (const auto& [name, mv] : state_) {
      out.emplace("adam.m/" + name, to_float(mv.first));
      out.emplace("adam.v/" + name, to_float(mv.second));
    }
    return out;
  }

  /// Restores moments for every parameter found in `tensors`; shapes must match.
  void load_state(const std::map<std::string, Tensor<float>>& tensors, nn::ParamRefs<T>& refs) {
    state_.clear();
    for (auto* p : refs.params) {
      const auto m = tensors.find("adam.m/" + p->name), v = tensors.find("adam.v/" + p->name);
      if (m == tensors.end() || v == tensors.end()) continue;
      if (m->second.shape != p->value.shape || v->second.shape != p->value.shape)
        throw Error("optimizer state for '" + p->name + "' has the wrong shape");
      auto& [mm, vv] = moments(*p);
      std::copy(m->second.data.begin(), m->second.data.end(), mm.data.begin());
      std::copy(v->second.data.begin(), v->second.data.end(), vv.data.begin());
    }
  }

 private:
  std::pair<Tensor<T>, Tensor<T>>& moments(const Param<T>& p) {
    auto it = state_.find(p.name);
    if (it == state_.end()) {
      Tensor<T> z(p.value.n(), p.value.c(), p.value.h(), p.value.w());
      it = state_.emplace(p.name, std::make_pair(z, z)).first;
    }
    return it->second;
  }

  static Tensor<float> to_float(const Tensor<T>& t) {
    Tensor<float> out(t.n(), t.c(), t.h(), t.w());
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
    return out;
  }

  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> state_;
};

}  // namespace fsmss
