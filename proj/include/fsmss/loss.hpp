// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <string>
#include <vector>

#include "fsmss/dsp.hpp"

namespace fsmss {

/// How the SDR term enters the objective: the energy ratio itself, or
/// -10 log10(ratio + sdr_db_floor).
enum class SdrForm { kRatio, kDecibel };

std::string to_string(SdrForm f);
SdrForm sdr_form_from_string(const std::string& s);

struct LossConfig {
  /// Guard in the SDR-loss denominator.
  double sdr_epsilon = 1e-8;
  SdrForm sdr_form = SdrForm::kDecibel;
  /// Added to the ratio before the logarithm; bounds the loss at 30 dB for
  /// an orthogonal estimate.
  double sdr_db_floor = 1e-3;
  double w_sdr = 1.0;
  double w_mae = 1.0;
  /// References with energy at or below this are treated as silent.
  double silent_energy = 1e-10;

  bool operator==(const LossConfig&) const = default;
};

struct LossBreakdown {
  double sdr_term = 0.0;
  double mag_mae_term = 0.0;
  double total = 0.0;
  double w_sdr = 1.0;
  double w_mae = 1.0;
  /// Set when the reference was silent and the SDR term was skipped.
  bool sdr_skipped = false;
};

/// -<s, e>^2 / (|s|^2 |e|^2 - <s, e>^2 + eps). Returns 0 for a silent reference.
double sdr_loss(const std::vector<double>& estimate, const std::vector<double>& reference, const LossConfig& cfg = {});
/// Gradient of sdr_loss w.r.t. the estimate (zero for a silent reference).
std::vector<double> sdr_loss_grad(const std::vector<double>& estimate, const std::vector<double>& reference,
                                  const LossConfig& cfg = {});

/// -10 log10(-sdr_loss + sdr_db_floor). Returns 0 for a silent reference.
double sdr_loss_db(const std::vector<double>& estimate, const std::vector<double>& reference,
                   const LossConfig& cfg = {});
std::vector<double> sdr_loss_db_grad(const std::vector<double>& estimate, const std::vector<double>& reference,
                                     const LossConfig& cfg = {});

/// Mean over bins of | |compress(E)| - |compress(R)| | where E, R are raw
/// spectrograms; equivalently |log1p|E|| - log1p|R|||.
double mag_mae(const ComplexSpectrogram& estimate, const ComplexSpectrogram& reference);
/// Gradient of mag_mae w.r.t. the (uncompressed) estimate spectrogram, as
/// (d/dRe, d/dIm) pairs.
std::vector<std::complex<double>> mag_mae_grad(const ComplexSpectrogram& estimate,
                                               const ComplexSpectrogram& reference);

/// Composite objective; recomputes both spectrograms with stft_cfg.
LossBreakdown total_loss(const AudioClip& estimate, const AudioClip& reference, const StftConfig& stft_cfg,
                         const LossConfig& cfg = {});
/// As total_loss, also returning d(total)/d(estimate) scaled by `scale`.
LossBreakdown total_loss_with_grad(const AudioClip& estimate, const AudioClip& reference,
                                   const StftConfig& stft_cfg, const LossConfig& cfg, double scale,
                                   std::vector<double>& grad);
/// Same, with a precomputed reference spectrogram.
LossBreakdown total_loss_with_grad(const AudioClip& estimate, const AudioClip& reference,
                                   const ComplexSpectrogram& reference_spec, const LossConfig& cfg, double scale,
                                   std::vector<double>& grad);

}  // namespace fsmss
