// SPDX-License-Identifier: Apache-2.0
#include "fsmss/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace fsmss::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;

/// image [C x H x W] -> cols [(C*k*k) x (Ho*Wo)]
template <typename T>
void im2col(const T* img, int channels, int h, int w, const ConvGeometry& g, int ho, int wo, T* cols) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ncols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates cols into img (img must be zeroed by caller).
template <typename T>
void col2im(const T* cols, int channels, int h, int w, const ConvGeometry& g, int ho, int wo, T* img) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * ncols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void uniform_fill(Tensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, ConvGeometry geom)
    : weight(name + ".weight", Tensor<T>(out_ch, in_ch * geom.kernel * geom.kernel)),
      bias(name + ".bias", Tensor<T>(out_ch, 1)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      geom_(geom) {}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_ch_) * geom_.kernel * geom_.kernel;
  uniform_fill(weight.value, std::sqrt(6.0 / fan_in), rng);
  bias.value.zero();
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_ch_)
    throw Error(weight.name + ": expected " + std::to_string(in_ch_) + " input channels, got " + shape_string(x));
  input_ = x;
  const int ho = geom_.out_size(x.h()), wo = geom_.out_size(x.w());
  Tensor<T> y(x.n(), out_ch_, ho, wo);
  const int rows = in_ch_ * geom_.kernel * geom_.kernel;
  const int ncols = ho * wo;
  std::vector<T> cols(static_cast<std::size_t>(rows) * ncols);
  CMapMat<T> wmat(weight.value.data.data(), out_ch_, rows);
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i), in_ch_, x.h(), x.w(), geom_, ho, wo, cols.data());
    MapMat<T> out(y.sample(i), out_ch_, ncols);
    out.noalias() = wmat * CMapMat<T>(cols.data(), rows, ncols);
    for (int c = 0; c < out_ch_; ++c) out.row(c).array() += bias.value.data[c];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out, bool need_input_grad) {
  const Tensor<T>& x = input_;
  const int ho = grad_out.h(), wo = grad_out.w();
  const int rows = in_ch_ * geom_.kernel * geom_.kernel;
  const int ncols = ho * wo;
  std::vector<T> cols(static_cast<std::size_t>(rows) * ncols);
  CMapMat<T> wmat(weight.value.data.data(), out_ch_, rows);
  MapMat<T> gw(weight.grad.data.data(), out_ch_, rows);
  Tensor<T> gx;
  if (need_input_grad) gx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
  for (int i = 0; i < x.n(); ++i) {
    CMapMat<T> gy(grad_out.sample(i), out_ch_, ncols);
    im2col(x.sample(i), in_ch_, x.h(), x.w(), geom_, ho, wo, cols.data());
    gw.noalias() += gy * CMapMat<T>(cols.data(), rows, ncols).transpose();
    for (int c = 0; c < out_ch_; ++c) {
      const T* row = grad_out.sample(i) + static_cast<std::size_t>(c) * ncols;
      T acc = T(0);
      for (int k = 0; k < ncols; ++k) acc += row[k];
      bias.grad.data[c] += acc;
    }
    if (need_input_grad) {
      MapMat<T>(cols.data(), rows, ncols).noalias() = wmat.transpose() * gy;
      col2im(cols.data(), in_ch_, x.h(), x.w(), geom_, ho, wo, gx.sample(i));
    }
  }
  return gx;
}

template <typename T>
void Conv2d<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_ch, int out_ch, ConvGeometry geom, int output_padding)
    : weight(name + ".weight", Tensor<T>(in_ch, out_ch * geom.kernel * geom.kernel)),
      bias(name + ".bias", Tensor<T>(out_ch, 1)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      geom_(geom),
      output_padding_(output_padding) {}

template <typename T>
void ConvTranspose2d<T>::init(std::mt19937_64& rng) {
  // Each output receives about in * k^2 / stride^2 contributions.
  const double fan_in =
      static_cast<double>(in_ch_) * geom_.kernel * geom_.kernel / (static_cast<double>(geom_.stride) * geom_.stride);
  uniform_fill(weight.value, std::sqrt(6.0 / fan_in), rng);
  bias.value.zero();
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_ch_)
    throw Error(weight.name + ": expected " + std::to_string(in_ch_) + " input channels, got " + shape_string(x));
  input_ = x;
  const int hs = x.h(), ws = x.w();
  const int h = (hs - 1) * geom_.stride - 2 * geom_.pad + geom_.kernel + output_padding_;
  const int w = (ws - 1) * geom_.stride - 2 * geom_.pad + geom_.kernel + output_padding_;
  Tensor<T> y(x.n(), out_ch_, h, w);
  const int rows = out_ch_ * geom_.kernel * geom_.kernel;
  const int ncols = hs * ws;
  std::vector<T> cols(static_cast<std::size_t>(rows) * ncols);
  CMapMat<T> wmat(weight.value.data.data(), in_ch_, rows);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < x.n(); ++i) {
    MapMat<T>(cols.data(), rows, ncols).noalias() = wmat.transpose() * CMapMat<T>(x.sample(i), in_ch_, ncols);
    T* out = y.sample(i);
    col2im(cols.data(), out_ch_, h, w, geom_, hs, ws, out);
    for (int c = 0; c < out_ch_; ++c) {
      const T b = bias.value.data[c];
      T* p = out + c * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const int hs = x.h(), ws = x.w();
  const int h = grad_out.h(), w = grad_out.w();
  const int rows = out_ch_ * geom_.kernel * geom_.kernel;
  const int ncols = hs * ws;
  std::vector<T> cols(static_cast<std::size_t>(rows) * ncols);
  CMapMat<T> wmat(weight.value.data.data(), in_ch_, rows);
  MapMat<T> gw(weight.grad.data.data(), in_ch_, rows);
  Tensor<T> gx(x.n(), x.c(), hs, ws);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < x.n(); ++i) {
    const T* gy = grad_out.sample(i);
    for (int c = 0; c < out_ch_; ++c) {
      T acc = 0;
      for (std::size_t j = 0; j < plane; ++j) acc += gy[c * plane + j];
      bias.grad.data[c] += acc;
    }
    im2col(gy, out_ch_, h, w, geom_, hs, ws, cols.data());
    CMapMat<T> gcols(cols.data(), rows, ncols);
    CMapMat<T> xi(x.sample(i), in_ch_, ncols);
    gw.noalias() += xi * gcols.transpose();
    MapMat<T>(gx.sample(i), in_ch_, ncols).noalias() = wmat * gcols;
  }
  return gx;
}

template <typename T>
void ConvTranspose2d<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, double momentum, double eps)
    : scale(name + ".scale", Tensor<T>(channels, 1, 1, 1, T(1))),
      shift(name + ".shift", Tensor<T>(channels, 1)),
      running_mean(channels, 1),
      running_var(channels, 1, 1, 1, T(1)),
      name_(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {}

template <typename T>
void BatchNorm2d<T>::begin_recalibration() {
  recalibrated_ = 0;
  running_mean.zero();
  std::fill(running_var.data.begin(), running_var.data.end(), T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  if (x.c() != channels_) throw Error(name_ + ": channel mismatch " + shape_string(x));
  last_training_ = training;
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(x.n()) * static_cast<double>(plane);
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  if (training) {
    xhat_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    inv_std_.assign(static_cast<std::size_t>(channels_), T(0));
  }
  const double momentum = recalibrated_ >= 0 ? recalibrated_ / (recalibrated_ + 1.0) : momentum_;
  if (training && recalibrated_ >= 0) ++recalibrated_;
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (int i = 0; i < x.n(); ++i) {
        const T* p = x.sample(i) + c * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      mean = s / count;
      double ss = 0.0;
      for (int i = 0; i < x.n(); ++i) {
        const T* p = x.sample(i) + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double d = p[j] - mean;
          ss += d * d;
        }
      }
      var = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var;
      running_mean.data[c] = static_cast<T>(momentum * running_mean.data[c] + (1.0 - momentum) * mean);
      running_var.data[c] = static_cast<T>(momentum * running_var.data[c] + (1.0 - momentum) * unbiased);
    } else {
      mean = running_mean.data[c];
      var = running_var.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    const T g = scale.value.data[c], b = shift.value.data[c];
    if (training) inv_std_[c] = static_cast<T>(inv);
    for (int i = 0; i < x.n(); ++i) {
      const T* p = x.sample(i) + c * plane;
      T* q = y.sample(i) + c * plane;
      T* h = training ? xhat_.sample(i) + c * plane : nullptr;
      for (std::size_t j = 0; j < plane; ++j) {
        const T xh = static_cast<T>((p[j] - mean) * inv);
        if (h) h[j] = xh;
        q[j] = g * xh + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  if (!last_training_) throw Error(name_ + ": backward requires a training-mode forward pass");
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(grad_out.n()) * static_cast<double>(plane);
  Tensor<T> gx(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < grad_out.n(); ++i) {
      const T* g = grad_out.sample(i) + c * plane;
      const T* h = xhat_.sample(i) + c * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_g += g[j];
        sum_gx += static_cast<double>(g[j]) * h[j];
      }
    }
    shift.grad.data[c] += static_cast<T>(sum_g);
    scale.grad.data[c] += static_cast<T>(sum_gx);
    const double k = static_cast<double>(scale.value.data[c]) * inv_std_[c] / count;
    for (int i = 0; i < grad_out.n(); ++i) {
      const T* g = grad_out.sample(i) + c * plane;
      const T* h = xhat_.sample(i) + c * plane;
      T* o = gx.sample(i) + c * plane;
      for (std::size_t j = 0; j < plane; ++j) o[j] = static_cast<T>(k * (count * g[j] - sum_g - h[j] * sum_gx));
    }
  }
  return gx;
}

template <typename T>
void BatchNorm2d<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&scale);
  refs.params.push_back(&shift);
  refs.buffers.push_back({name_ + ".running_mean", &running_mean});
  refs.buffers.push_back({name_ + ".running_var", &running_var});
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, int in, int out)
    : weight(name + ".weight", Tensor<T>(out, in)), bias(name + ".bias", Tensor<T>(out, 1)), in_(in), out_(out) {}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng) {
  uniform_fill(weight.value, std::sqrt(6.0 / in_), rng);
  bias.value.zero();
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != in_)
    throw Error(weight.name + ": expected input width " + std::to_string(in_) + ", got " + shape_string(x));
  input_ = x;
  Tensor<T> y(x.n(), out_);
  CMapMat<T> xm(x.data.data(), x.n(), in_);
  MapMat<T> ym(y.data.data(), x.n(), out_);
  ym.noalias() = xm * CMapMat<T>(weight.value.data.data(), out_, in_).transpose();
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < out_; ++o) ym(i, o) += bias.value.data[o];
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.n();
  CMapMat<T> gy(grad_out.data.data(), n, out_);
  CMapMat<T> xm(input_.data.data(), n, in_);
  MapMat<T>(weight.grad.data.data(), out_, in_).noalias() += gy.transpose() * xm;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) bias.grad.data[o] += gy(i, o);
  Tensor<T> gx(input_.n(), input_.c(), input_.h(), input_.w());
  MapMat<T>(gx.data.data(), n, in_).noalias() = gy * CMapMat<T>(weight.value.data.data(), out_, in_);
  return gx;
}

template <typename T>
void Linear<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

// ----------------------------------------------------------- activations

template <typename T>
Tensor<T> LeakyRelu<T>::forward(const Tensor<T>& x) {
  input_ = x;
  Tensor<T> y = x;
  for (auto& v : y.data)
    if (v < T(0)) v *= slope_;
  return y;
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward(const Tensor<T>& grad_out) const {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (input_.data[i] < T(0)) g.data[i] *= slope_;
  return g;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape;
  const int ho = x.h() / 2, wo = x.w() / 2;
  if (ho == 0 || wo == 0) throw Error("max-pool input too small: " + shape_string(x));
  Tensor<T> y(x.n(), x.c(), ho, wo);
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          std::size_t best = 0;
          T bv = -std::numeric_limits<T>::infinity();
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(i) * x.c() + c) * x.h() + (2 * oy + dy)) * x.w() + (2 * ox + dx);
              if (x.data[idx] > bv) {
                bv = x.data[idx];
                best = idx;
              }
            }
          y.data[o] = bv;
          argmax_[o] = best;
        }
  return y;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) const {
  Tensor<T> gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gx.data[argmax_[o]] += grad_out.data[o];
  return gx;
}

template <typename T>
Tensor<T> GlobalTimeMax<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape;
  Tensor<T> y(x.n(), x.c() * x.h());
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int b = 0; b < x.h(); ++b, ++o) {
        const std::size_t base = ((static_cast<std::size_t>(i) * x.c() + c) * x.h() + b) * x.w();
        std::size_t best = base;
        for (int t = 1; t < x.w(); ++t)
          if (x.data[base + t] > x.data[best]) best = base + t;
        y.data[o] = x.data[best];
        argmax_[o] = best;
      }
  return y;
}

template <typename T>
Tensor<T> GlobalTimeMax<T>::backward(const Tensor<T>& grad_out) const {
  Tensor<T> gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gx.data[argmax_[o]] += grad_out.data[o];
  return gx;
}

#define FSMSS_INSTANTIATE(T)        \
  template class Conv2d<T>;         \
  template class ConvTranspose2d<T>; \
  template class BatchNorm2d<T>;    \
  template class Linear<T>;         \
  template class LeakyRelu<T>;      \
  template class MaxPool2x2<T>;     \
  template class GlobalTimeMax<T>;

FSMSS_INSTANTIATE(float)
FSMSS_INSTANTIATE(double)
#undef FSMSS_INSTANTIATE

}  // namespace fsmss::nn
