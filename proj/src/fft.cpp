// SPDX-License-Identifier: Apache-2.0
#include "fsmss/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>

#include "fsmss/audio.hpp"

namespace fsmss {

namespace {
// FFTW planning is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int size) : n_(size) {
  if (size < 2 || (size & (size - 1)) != 0) throw Error("FFT size must be a power of two >= 2");
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(static_cast<std::size_t>(n_));
  cplx_ = fftw_alloc_complex(static_cast<std::size_t>(bins()));
  auto* c = static_cast<fftw_complex*>(cplx_);
  plan_fwd_ = fftw_plan_dft_r2c_1d(n_, real_, c, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_1d(n_, c, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(real_);
  fftw_free(cplx_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  std::memcpy(real_, in.data(), sizeof(double) * static_cast<std::size_t>(n_));
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  std::memcpy(out.data(), cplx_, sizeof(fftw_complex) * static_cast<std::size_t>(bins()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  auto* c = static_cast<fftw_complex*>(cplx_);
  std::memcpy(c, in.data(), sizeof(fftw_complex) * static_cast<std::size_t>(bins()));
  c[0][1] = 0.0;
  c[n_ / 2][1] = 0.0;
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = real_[i] * scale;
}

}  // namespace fsmss
