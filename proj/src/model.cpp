// SPDX-License-Identifier: Apache-2.0
#include "fsmss/model.hpp"

#include <algorithm>
#include <cmath>

namespace fsmss {

void UNetConfig::validate() const {
  if (depth < 1) throw Error("unet.depth must be >= 1");
  if (base_channels < 1) throw Error("unet.base_channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw Error("unet.kernel must be odd");
  if (stride != 2) throw Error("unet.stride must be 2");
  if (in_channels < 1) throw Error("unet.in_channels must be >= 1");
  const int div = 1 << depth;
  if (in_freq % div != 0 || in_frames % div != 0)
    throw Error("unet input " + std::to_string(in_freq) + "x" + std::to_string(in_frames) +
                " must be divisible by 2^depth = " + std::to_string(div));
}

std::vector<double> film(const std::vector<double>& features, int channels, const FilmParams& params) {
  if (channels <= 0 || static_cast<int>(params.gamma.size()) != channels ||
      static_cast<int>(params.beta.size()) != channels)
    throw Error("film: parameter length does not match channel count " + std::to_string(channels));
  if (features.size() % static_cast<std::size_t>(channels) != 0) throw Error("film: feature size not divisible by channels");
  const std::size_t plane = features.size() / static_cast<std::size_t>(channels);
  std::vector<double> out(features.size());
  for (int c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < plane; ++j)
      out[c * plane + j] = params.gamma[c] * features[c * plane + j] + params.beta[c];
  return out;
}

template <typename T>
Tensor<T> film(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (gamma.n() != x.n() || beta.n() != x.n() || static_cast<int>(gamma.sample_size()) != x.c() ||
      static_cast<int>(beta.sample_size()) != x.c())
    throw Error("film: gamma/beta " + shape_string(gamma) + " do not match features " + shape_string(x));
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  const std::size_t plane = x.plane();
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c) {
      const T g = gamma.data[static_cast<std::size_t>(i) * x.c() + c];
      const T b = beta.data[static_cast<std::size_t>(i) * x.c() + c];
      const T* p = x.sample(i) + c * plane;
      T* q = y.sample(i) + c * plane;
      for (std::size_t j = 0; j < plane; ++j) q[j] = g * p[j] + b;
    }
  return y;
}

std::complex<double> mask_value(double a, double b) {
  if (a == 0.0 && b == 0.0) return {0.5, 0.0};
  const double r = std::sqrt(a * a + b * b + kMaskEpsilon);
  const double s = 1.0 / (1.0 + std::exp(-r));
  return {s * a / r, s * b / r};
}

std::array<double, 2> mask_value_vjp(double a, double b, std::complex<double> grad) {
  if (a == 0.0 && b == 0.0) return {0.0, 0.0};
  const double r2 = a * a + b * b + kMaskEpsilon;
  const double r = std::sqrt(r2);
  const double s = 1.0 / (1.0 + std::exp(-r));
  const double ds = s * (1.0 - s);
  const double r3 = r2 * r;
  // m_a = s a / r, m_b = s b / r
  const double daa = ds * a * a / r2 + s * (r2 - a * a) / r3;
  const double dbb = ds * b * b / r2 + s * (r2 - b * b) / r3;
  const double dab = a * b * (ds / r2 - s / r3);
  const double gr = grad.real(), gi = grad.imag();
  return {gr * daa + gi * dab, gr * dab + gi * dbb};
}

// --------------------------------------------------------- FilmGenerator

template <typename T>
FilmGenerator<T>::FilmGenerator(int cond_dim, int channels)
    : gamma_head_("film.gamma", cond_dim, channels), beta_head_("film.beta", cond_dim, channels) {
  init();
}

template <typename T>
void FilmGenerator<T>::init() {
  gamma_head_.weight.value.zero();
  beta_head_.weight.value.zero();
  std::fill(gamma_head_.bias.value.data.begin(), gamma_head_.bias.value.data.end(), T(1));
  beta_head_.bias.value.zero();
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> FilmGenerator<T>::forward(const Tensor<T>& z) {
  if (static_cast<int>(z.sample_size()) != input_dim())
    throw Error("film generator expects conditioning width " + std::to_string(input_dim()) + ", got " +
                std::to_string(z.sample_size()));
  return {gamma_head_.forward(z), beta_head_.forward(z)};
}

template <typename T>
Tensor<T> FilmGenerator<T>::backward(const Tensor<T>& grad_gamma, const Tensor<T>& grad_beta) {
  Tensor<T> gz = gamma_head_.backward(grad_gamma);
  const Tensor<T> gz2 = beta_head_.backward(grad_beta);
  for (std::size_t i = 0; i < gz.size(); ++i) gz.data[i] += gz2.data[i];
  return gz;
}

template <typename T>
void FilmGenerator<T>::collect(nn::ParamRefs<T>& refs) {
  gamma_head_.collect(refs);
  beta_head_.collect(refs);
}

// ------------------------------------------------------------ helpers

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw Error("concat: spatial mismatch " + shape_string(a) + " vs " + shape_string(b));
  Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.sample(i), a.sample_size(), y.sample(i));
    std::copy_n(b.sample(i), b.sample_size(), y.sample(i) + a.sample_size());
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first) {
  Tensor<T> a(x.n(), first, x.h(), x.w()), b(x.n(), x.c() - first, x.h(), x.w());
  for (int i = 0; i < x.n(); ++i) {
    std::copy_n(x.sample(i), a.sample_size(), a.sample(i));
    std::copy_n(x.sample(i) + a.sample_size(), b.sample_size(), b.sample(i));
  }
  return {std::move(a), std::move(b)};
}

// ------------------------------------------------------------------ UNet

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const nn::ConvGeometry geom{cfg.kernel, cfg.stride, cfg.kernel / 2};
  const T slope = static_cast<T>(cfg.leaky_slope);
  for (int i = 0; i < cfg.depth; ++i) {
    const int in = i == 0 ? cfg.in_channels : cfg.channels(i - 1);
    const std::string name = "unet.enc" + std::to_string(i);
    enc_conv_.emplace_back(name + ".conv", in, cfg.channels(i), geom);
    enc_bn_.emplace_back(name + ".bn", cfg.channels(i), cfg.bn_momentum);
    enc_act_.emplace_back(slope);
  }
  for (int j = 0; j < cfg.depth; ++j) {
    const int in = j == cfg.depth - 1 ? cfg.channels(j) : 2 * cfg.channels(j);
    const int out = j == 0 ? 2 : cfg.channels(j - 1);
    const std::string name = "unet.dec" + std::to_string(j);
    dec_conv_.emplace_back(name + ".conv", in, out, geom, 1);
    dec_bn_.emplace_back(name + ".bn", out, cfg.bn_momentum);
    dec_act_.emplace_back(T(0));
  }
}

template <typename T>
void UNet<T>::init(std::mt19937_64& rng) {
  for (auto& c : enc_conv_) c.init(rng);
  for (auto& c : dec_conv_) c.init(rng);
  // Mask head starts near phase 0 so the estimate correlates positively with the mixture.
  auto& head = dec_conv_.front();
  for (auto& w : head.weight.value.data) w *= T(0.1);
  head.bias.value.data[0] = T(1);
}

template <typename T>
std::vector<int> UNet<T>::decoder_input_channels() const {
  std::vector<int> out;
  for (const auto& c : dec_conv_) out.push_back(c.in_channels());
  return out;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, bool training) {
  if (x.c() != cfg_.in_channels || x.h() != cfg_.in_freq || x.w() != cfg_.in_frames)
    throw Error("unet input " + shape_string(x) + " does not match configured [" + std::to_string(cfg_.in_channels) +
                "x" + std::to_string(cfg_.in_freq) + "x" + std::to_string(cfg_.in_frames) + "]");
  training_ = training;
  std::vector<Tensor<T>> skips(static_cast<std::size_t>(cfg_.depth));
  enc_shapes_.clear();
  const Tensor<T>* h = &x;
  for (int i = 0; i < cfg_.depth; ++i) {
    skips[i] = enc_act_[i].forward(enc_bn_[i].forward(enc_conv_[i].forward(*h), training));
    enc_shapes_.push_back({skips[i].c(), skips[i].h(), skips[i].w()});
    h = &skips[i];
  }
  bottleneck_ = skips.back();
  gamma_ = gamma;
  beta_ = beta;
  modulated_ = film(bottleneck_, gamma, beta);

  Tensor<T> d = modulated_;
  for (int j = cfg_.depth - 1; j >= 0; --j) {
    Tensor<T> in = j == cfg_.depth - 1 ? std::move(d) : concat_channels(d, skips[j]);
    d = dec_conv_[j].forward(in);
    if (j > 0) d = dec_act_[j].forward(dec_bn_[j].forward(d, training));
  }
  return d;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> UNet<T>::backward(const Tensor<T>& grad_out) {
  if (!training_) throw Error("unet backward requires a training-mode forward pass");
  const int depth = cfg_.depth;
  std::vector<Tensor<T>> enc_grad(static_cast<std::size_t>(depth));
  Tensor<T> g = grad_out;
  Tensor<T> g_mod;
  for (int j = 0; j < depth; ++j) {
    if (j > 0) g = dec_bn_[j].backward(dec_act_[j].backward(g));
    Tensor<T> g_in = dec_conv_[j].backward(g);
    if (j == depth - 1) {
      g_mod = std::move(g_in);
    } else {
      auto [g_d, g_skip] = split_channels(g_in, cfg_.channels(j));
      enc_grad[j] = std::move(g_skip);
      g = std::move(g_d);
    }
  }

  // FiLM backward.
  const int n = bottleneck_.n(), c = bottleneck_.c();
  const std::size_t plane = bottleneck_.plane();
  Tensor<T> g_gamma(n, c), g_beta(n, c);
  Tensor<T> g_b(n, c, bottleneck_.h(), bottleneck_.w());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t k = static_cast<std::size_t>(i) * c + ch;
      const T* gm = g_mod.sample(i) + ch * plane;
      const T* b = bottleneck_.sample(i) + ch * plane;
      T* gb = g_b.sample(i) + ch * plane;
      T sg = 0, sgb = 0;
      for (std::size_t p = 0; p < plane; ++p) {
        sg += gm[p];
        sgb += gm[p] * b[p];
        gb[p] = gamma_.data[k] * gm[p];
      }
      g_gamma.data[k] = sgb;
      g_beta.data[k] = sg;
    }
  enc_grad[depth - 1] = std::move(g_b);

  for (int i = depth - 1; i >= 0; --i) {
    Tensor<T> gi = enc_bn_[i].backward(enc_act_[i].backward(enc_grad[i]));
    Tensor<T> gx = enc_conv_[i].backward(gi, i > 0);
    if (i > 0) {
      auto& acc = enc_grad[i - 1];
      for (std::size_t k = 0; k < acc.size(); ++k) acc.data[k] += gx.data[k];
    }
  }
  return {std::move(g_gamma), std::move(g_beta)};
}

template <typename T>
void UNet<T>::set_recalibration(bool on) {
  for (auto* bns : {&enc_bn_, &dec_bn_})
    for (auto& bn : *bns) on ? bn.begin_recalibration() : bn.end_recalibration();
}

template <typename T>
void UNet<T>::collect(nn::ParamRefs<T>& refs) {
  for (int i = 0; i < cfg_.depth; ++i) {
    enc_conv_[i].collect(refs);
    enc_bn_[i].collect(refs);
  }
  for (int j = 0; j < cfg_.depth; ++j) {
    dec_conv_[j].collect(refs);
    if (j > 0) dec_bn_[j].collect(refs);
  }
}

template Tensor<float> film(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> film(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template std::pair<Tensor<float>, Tensor<float>> split_channels(const Tensor<float>&, int);
template std::pair<Tensor<double>, Tensor<double>> split_channels(const Tensor<double>&, int);
template class FilmGenerator<float>;
template class FilmGenerator<double>;
template class UNet<float>;
template class UNet<double>;

}  // namespace fsmss
