// SPDX-License-Identifier: Apache-2.0
#include "fsmss/loss.hpp"

#include <cmath>

namespace fsmss {

namespace {

struct Moments {
  double ref_energy = 0.0;
  double est_energy = 0.0;
  double cross = 0.0;
};

Moments moments(const std::vector<double>& e, const std::vector<double>& s) {
  if (e.size() != s.size()) throw Error("sdr_loss: estimate and reference lengths differ");
  Moments m;
  for (std::size_t i = 0; i < e.size(); ++i) {
    m.ref_energy += s[i] * s[i];
    m.est_energy += e[i] * e[i];
    m.cross += s[i] * e[i];
  }
  return m;
}

void check_shapes(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
  if (a.bins != b.bins || a.frames != b.frames || a.data.size() != b.data.size())
    throw Error("mag_mae: spectrogram shapes differ");
  if (a.data.empty()) throw Error("mag_mae: empty spectrogram");
}

}  // namespace

namespace {

double sdr_term(const std::vector<double>& e, const std::vector<double>& s, const LossConfig& cfg) {
  return cfg.sdr_form == SdrForm::kRatio ? sdr_loss(e, s, cfg) : sdr_loss_db(e, s, cfg);
}

}  // namespace

double sdr_loss(const std::vector<double>& estimate, const std::vector<double>& reference, const LossConfig& cfg) {
  const auto m = moments(estimate, reference);
  if (m.ref_energy <= cfg.silent_energy) return 0.0;
  const double denom = m.ref_energy * m.est_energy - m.cross * m.cross + cfg.sdr_epsilon;
  return -(m.cross * m.cross) / denom;
}

std::vector<double> sdr_loss_grad(const std::vector<double>& estimate, const std::vector<double>& reference,
                                  const LossConfig& cfg) {
  const auto m = moments(estimate, reference);
  std::vector<double> g(estimate.size(), 0.0);
  if (m.ref_energy <= cfg.silent_energy) return g;
  const double a = m.cross;
  const double d = m.ref_energy * m.est_energy - a * a + cfg.sdr_epsilon;
  // L = -a^2 / D; dL/de = -2a s / D + a^2 (2 S e - 2 a s) / D^2
  const double cs = -2.0 * a / d - 2.0 * a * a * a / (d * d);
  const double ce = 2.0 * a * a * m.ref_energy / (d * d);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = cs * reference[i] + ce * estimate[i];
  return g;
}

std::string to_string(SdrForm f) { return f == SdrForm::kRatio ? "ratio" : "decibel"; }

SdrForm sdr_form_from_string(const std::string& s) {
  if (s == "ratio") return SdrForm::kRatio;
  if (s == "decibel") return SdrForm::kDecibel;
  throw Error("unknown sdr form '" + s + "' (expected ratio or decibel)");
}

double sdr_loss_db(const std::vector<double>& estimate, const std::vector<double>& reference, const LossConfig& cfg) {
  if (moments(estimate, reference).ref_energy <= cfg.silent_energy) return 0.0;
  return -10.0 * std::log10(-sdr_loss(estimate, reference, cfg) + cfg.sdr_db_floor);
}

std::vector<double> sdr_loss_db_grad(const std::vector<double>& estimate, const std::vector<double>& reference,
                                     const LossConfig& cfg) {
  auto g = sdr_loss_grad(estimate, reference, cfg);
  if (moments(estimate, reference).ref_energy <= cfg.silent_energy) return g;
  // d/de -10 log10(r + f) with r = -sdr_loss.
  const double k = 10.0 / std::log(10.0) / (-sdr_loss(estimate, reference, cfg) + cfg.sdr_db_floor);
  for (auto& v : g) v *= k;
  return g;
}

double mag_mae(const ComplexSpectrogram& estimate, const ComplexSpectrogram& reference) {
  check_shapes(estimate, reference);
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.data.size(); ++i)
    acc += std::abs(std::log1p(std::abs(estimate.data[i])) - std::log1p(std::abs(reference.data[i])));
  return acc / static_cast<double>(estimate.data.size());
}

std::vector<std::complex<double>> mag_mae_grad(const ComplexSpectrogram& estimate,
                                               const ComplexSpectrogram& reference) {
  check_shapes(estimate, reference);
  const double inv_count = 1.0 / static_cast<double>(estimate.data.size());
  std::vector<std::complex<double>> g(estimate.data.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double me = std::abs(estimate.data[i]);
    if (me == 0.0) continue;
    const double diff = std::log1p(me) - std::log1p(std::abs(reference.data[i]));
    if (diff == 0.0) continue;
    const double sign = diff > 0.0 ? 1.0 : -1.0;
    // d log1p|E| / dE = E / (|E| (1 + |E|))
    g[i] = estimate.data[i] * (sign * inv_count / (me * (1.0 + me)));
  }
  return g;
}

LossBreakdown total_loss(const AudioClip& estimate, const AudioClip& reference, const StftConfig& stft_cfg,
                         const LossConfig& cfg) {
  LossBreakdown b;
  b.w_sdr = cfg.w_sdr;
  b.w_mae = cfg.w_mae;
  b.sdr_skipped = moments(estimate.samples, reference.samples).ref_energy <= cfg.silent_energy;
  b.sdr_term = sdr_term(estimate.samples, reference.samples, cfg);
  b.mag_mae_term = mag_mae(stft(estimate, stft_cfg), stft(reference, stft_cfg));
  b.total = cfg.w_sdr * b.sdr_term + cfg.w_mae * b.mag_mae_term;
  return b;
}

LossBreakdown total_loss_with_grad(const AudioClip& estimate, const AudioClip& reference,
                                   const ComplexSpectrogram& reference_spec, const LossConfig& cfg, double scale,
                                   std::vector<double>& grad) {
  const StftConfig& stft_cfg = reference_spec.config;
  LossBreakdown b;
  b.w_sdr = cfg.w_sdr;
  b.w_mae = cfg.w_mae;
  b.sdr_skipped = moments(estimate.samples, reference.samples).ref_energy <= cfg.silent_energy;
  b.sdr_term = sdr_term(estimate.samples, reference.samples, cfg);
  const auto est_spec = stft(estimate, stft_cfg);
  b.mag_mae_term = mag_mae(est_spec, reference_spec);
  b.total = cfg.w_sdr * b.sdr_term + cfg.w_mae * b.mag_mae_term;

  auto g_spec = mag_mae_grad(est_spec, reference_spec);
  for (auto& v : g_spec) v *= cfg.w_mae * scale;
  grad = stft_adjoint(g_spec, stft_cfg, estimate.size());
  if (!b.sdr_skipped) {
    const auto g_sdr = cfg.sdr_form == SdrForm::kRatio ? sdr_loss_grad(estimate.samples, reference.samples, cfg)
                                                       : sdr_loss_db_grad(estimate.samples, reference.samples, cfg);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.w_sdr * scale * g_sdr[i];
  }
  return b;
}

LossBreakdown total_loss_with_grad(const AudioClip& estimate, const AudioClip& reference,
                                   const StftConfig& stft_cfg, const LossConfig& cfg, double scale,
                                   std::vector<double>& grad) {
  return total_loss_with_grad(estimate, reference, stft(reference, stft_cfg), cfg, scale, grad);
}

}  // namespace fsmss
