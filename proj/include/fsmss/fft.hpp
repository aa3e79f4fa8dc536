// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <span>

namespace fsmss {

/// Real-input FFT of a fixed power-of-two size backed by FFTW.
/// One instance owns its buffers and is not shareable across threads;
/// separate instances may run concurrently.
class RealFft {
 public:
  explicit RealFft(int size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// X[k] = sum_n x[n] exp(-2 pi i k n / N), k = 0..N/2.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Unnormalised-forward inverse: x[n] = (1/N) * (full Hermitian sum).
  /// Imaginary parts of the DC and Nyquist bins are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  int n_;
  double* real_ = nullptr;
  void* cplx_ = nullptr;
  void* plan_fwd_ = nullptr;
  void* plan_inv_ = nullptr;
};

}  // namespace fsmss
