// SPDX-License-Identifier: Apache-2.0
#include "fsmss/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fsmss/fft.hpp"

namespace fsmss {

std::string to_string(Window w) { return w == Window::kHann ? "hann" : "rect"; }

Window window_from_string(const std::string& name) {
  if (name == "hann") return Window::kHann;
  if (name == "rect") return Window::kRect;
  throw Error("unknown window '" + name + "' (expected hann or rect)");
}

std::vector<double> StftConfig::window_samples() const {
  std::vector<double> w(static_cast<std::size_t>(fft_size), 1.0);
  if (window == Window::kHann)
    for (int n = 0; n < fft_size; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / fft_size);
  return w;
}

void StftConfig::validate() const {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) throw Error("fft_size must be a power of two");
  if (hop <= 0 || hop > fft_size) throw Error("hop must be in (0, fft_size]");
  if (fft_size % hop != 0) throw Error("hop must divide fft_size");
  const auto w = window_samples();
  std::vector<double> acc(static_cast<std::size_t>(hop), 0.0);
  for (int n = 0; n < fft_size; ++n) acc[n % hop] += w[n] * w[n];
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  if (*lo <= 0.0 || (*hi - *lo) > 1e-9 * *hi)
    throw Error("window '" + to_string(window) + "' is not constant-overlap-add at hop " + std::to_string(hop) +
                " for fft_size " + std::to_string(fft_size));
}

int StftConfig::frames(std::size_t length) const {
  if (centered) return static_cast<int>(length / static_cast<std::size_t>(hop)) + 1;
  if (length < static_cast<std::size_t>(fft_size)) return 0;
  return static_cast<int>((length - fft_size) / hop) + 1;
}

namespace {

/// Index into a signal of length len with (repeated) mirror reflection at both ends.
std::size_t reflect_index(long long i, std::size_t len) {
  const long long n = static_cast<long long>(len);
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error("resample: target rate must be positive");
  if (clip.empty()) throw Error("resample: empty input");
  if (clip.sample_rate <= 0) throw Error("resample: source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double scale = std::min(1.0, ratio);
  const double fc = kResampleCutoff * scale;  // in cycles per input sample, times 2
  const double half_width = kResampleHalfTaps / scale;

  // Tabulated kernel over [0, half_width] in input-sample units.
  constexpr int kTableRes = 512;
  const int table_len = static_cast<int>(std::ceil(half_width * kTableRes)) + 2;
  std::vector<double> table(static_cast<std::size_t>(table_len));
  const double i0_beta = bessel_i0(kResampleKaiserBeta);
  for (int i = 0; i < table_len; ++i) {
    const double t = static_cast<double>(i) / kTableRes;
    const double u = t / half_width;
    if (u >= 1.0) {
      table[i] = 0.0;
      continue;
    }
    const double x = fc * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    table[i] = fc * sinc * bessel_i0(kResampleKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
  }
  auto kernel = [&](double t) {
    const double pos = std::abs(t) * kTableRes;
    const auto idx = static_cast<std::size_t>(pos);
    if (idx + 1 >= table.size()) return 0.0;
    const double frac = pos - static_cast<double>(idx);
    return table[idx] * (1.0 - frac) + table[idx + 1] * frac;
  };

  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(clip.size()) * ratio));
  AudioClip out(std::max<std::size_t>(out_len, 1), target_rate);
  const auto n_in = static_cast<long long>(clip.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    const double p = static_cast<double>(m) / ratio;
    const long long lo = std::max<long long>(0, static_cast<long long>(std::ceil(p - half_width)));
    const long long hi = std::min<long long>(n_in - 1, static_cast<long long>(std::floor(p + half_width)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) acc += clip.samples[static_cast<std::size_t>(k)] * kernel(p - k);
    out.samples[m] = acc;
  }
  return out;
}

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  if (clip.empty()) throw Error("stft: empty input");
  const int n_fft = cfg.fft_size;
  const int frames = cfg.frames(clip.size());
  if (frames <= 0) throw Error("stft: signal shorter than one frame");
  const long long pad = cfg.centered ? n_fft / 2 : 0;
  const auto w = cfg.window_samples();

  ComplexSpectrogram spec;
  spec.bins = cfg.bins();
  spec.frames = frames;
  spec.config = cfg;
  spec.sample_rate = clip.sample_rate;
  spec.length = clip.size();
  spec.data.assign(static_cast<std::size_t>(spec.bins) * frames, {});

  RealFft fft(n_fft);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> col(static_cast<std::size_t>(spec.bins));
  for (int t = 0; t < frames; ++t) {
    const long long start = static_cast<long long>(t) * cfg.hop - pad;
    for (int n = 0; n < n_fft; ++n) frame[n] = w[n] * clip.samples[reflect_index(start + n, clip.size())];
    fft.forward(frame, col);
    for (int k = 0; k < spec.bins; ++k) spec.at(k, t) = col[k];
  }
  return spec;
}

namespace {

/// Sum of squared windows at every padded-signal position.
std::vector<double> window_sum_square(const StftConfig& cfg, int frames, std::size_t padded_len) {
  const auto w = cfg.window_samples();
  std::vector<double> wss(padded_len, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < cfg.fft_size; ++n) {
      const std::size_t j = static_cast<std::size_t>(t) * cfg.hop + n;
      if (j < padded_len) wss[j] += w[n] * w[n];
    }
  return wss;
}

constexpr double kWssFloor = 1e-11;

}  // namespace

AudioClip istft(const ComplexSpectrogram& spec) {
  const auto& cfg = spec.config;
  cfg.validate();
  if (spec.bins != cfg.bins()) throw Error("istft: bin count does not match fft_size");
  if (spec.data.size() != static_cast<std::size_t>(spec.bins) * spec.frames) throw Error("istft: data size mismatch");
  const int n_fft = cfg.fft_size;
  const std::size_t pad = cfg.centered ? static_cast<std::size_t>(n_fft / 2) : 0;
  const std::size_t padded_len = static_cast<std::size_t>(std::max(0, spec.frames - 1)) * cfg.hop + n_fft;
  const auto w = cfg.window_samples();

  std::vector<double> acc(padded_len, 0.0);
  RealFft fft(n_fft);
  std::vector<std::complex<double>> col(static_cast<std::size_t>(spec.bins));
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) col[k] = spec.at(k, t);
    fft.inverse(col, frame);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < n_fft; ++n) acc[start + n] += w[n] * frame[n];
  }
  const auto wss = window_sum_square(cfg, spec.frames, padded_len);

  AudioClip out(spec.length, spec.sample_rate);
  for (std::size_t i = 0; i < spec.length; ++i) {
    const std::size_t j = i + pad;
    if (j < padded_len && wss[j] > kWssFloor) out.samples[i] = acc[j] / wss[j];
  }
  return out;
}

std::vector<double> stft_adjoint(const std::vector<std::complex<double>>& grad_spec, const StftConfig& cfg,
                                 std::size_t length) {
  const int bins = cfg.bins();
  const int frames = cfg.frames(length);
  if (grad_spec.size() != static_cast<std::size_t>(bins) * frames) throw Error("stft_adjoint: size mismatch");
  const int n_fft = cfg.fft_size;
  const long long pad = cfg.centered ? n_fft / 2 : 0;
  const auto w = cfg.window_samples();

  std::vector<double> grad(length, 0.0);
  RealFft fft(n_fft);
  std::vector<std::complex<double>> col(static_cast<std::size_t>(bins));
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  // d/dx[n] of sum_k (gr_k Re X_k + gi_k Im X_k) = w[n] Re(sum_k g_k e^{+2 pi i k n / N}).
  // RealFft::inverse computes (1/N)(H_0 + H_{N/2}(-1)^n + 2 sum_mid Re(H_k e^{...})),
  // so scale DC/Nyquist by N and the rest by N/2.
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      const double s = (k == 0 || k == bins - 1) ? n_fft : n_fft / 2.0;
      col[k] = grad_spec[static_cast<std::size_t>(k) * frames + t] * s;
    }
    fft.inverse(col, frame);
    const long long start = static_cast<long long>(t) * cfg.hop - pad;
    for (int n = 0; n < n_fft; ++n) grad[reflect_index(start + n, length)] += w[n] * frame[n];
  }
  return grad;
}

std::vector<std::complex<double>> istft_adjoint(const std::vector<double>& grad_signal, const StftConfig& cfg,
                                                int frames) {
  const int n_fft = cfg.fft_size;
  const int bins = cfg.bins();
  const std::size_t pad = cfg.centered ? static_cast<std::size_t>(n_fft / 2) : 0;
  const std::size_t padded_len = static_cast<std::size_t>(std::max(0, frames - 1)) * cfg.hop + n_fft;
  const auto w = cfg.window_samples();
  const auto wss = window_sum_square(cfg, frames, padded_len);

  std::vector<double> g(padded_len, 0.0);
  for (std::size_t i = 0; i < grad_signal.size(); ++i) {
    const std::size_t j = i + pad;
    if (j < padded_len && wss[j] > kWssFloor) g[j] = grad_signal[i] / wss[j];
  }

  std::vector<std::complex<double>> out(static_cast<std::size_t>(bins) * frames);
  RealFft fft(n_fft);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> col(static_cast<std::size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < n_fft; ++n) frame[n] = w[n] * g[start + n];
    fft.forward(frame, col);
    for (int k = 0; k < bins; ++k) {
      const bool edge = k == 0 || k == bins - 1;
      // Inverse real FFT ignores Im of DC and Nyquist.
      const std::complex<double> v = edge ? std::complex<double>(col[k].real() / n_fft, 0.0)
                                          : col[k] * (2.0 / n_fft);
      out[static_cast<std::size_t>(k) * frames + t] = v;
    }
  }
  return out;
}

std::complex<double> compress_value(std::complex<double> x) {
  const double m = std::abs(x);
  if (m == 0.0) return {};
  return x * (std::log1p(m) / m);
}

std::complex<double> decompress_value(std::complex<double> x) {
  const double m = std::abs(x);
  if (m == 0.0) return {};
  return x * (std::expm1(m) / m);
}

ComplexSpectrogram compress(const ComplexSpectrogram& spec) {
  ComplexSpectrogram out = spec;
  for (auto& v : out.data) v = compress_value(v);
  return out;
}

ComplexSpectrogram decompress(const ComplexSpectrogram& spec) {
  ComplexSpectrogram out = spec;
  for (auto& v : out.data) v = decompress_value(v);
  return out;
}

ComplexSpectrogram apply_mask(const ComplexSpectrogram& spec, const ComplexMask& mask) {
  if (mask.bins != spec.bins || mask.frames != spec.frames || mask.data.size() != spec.data.size())
    throw Error("apply_mask: mask shape " + std::to_string(mask.bins) + "x" + std::to_string(mask.frames) +
                " does not match spectrogram " + std::to_string(spec.bins) + "x" + std::to_string(spec.frames));
  ComplexSpectrogram out = spec;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  return out;
}

std::vector<Chunk> chunk(const AudioClip& clip, std::size_t chunk_len, double overlap) {
  if (chunk_len == 0) throw Error("chunk: chunk length must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error("chunk: overlap must be in [0, 1)");
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(chunk_len) * (1.0 - overlap))));
  std::vector<Chunk> out;
  for (std::size_t off = 0;; off += step) {
    Chunk c{off, AudioClip(chunk_len, clip.sample_rate)};
    const std::size_t avail = off < clip.size() ? std::min(chunk_len, clip.size() - off) : 0;
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(off), avail, c.clip.samples.begin());
    out.push_back(std::move(c));
    if (off + chunk_len >= clip.size()) break;
  }
  return out;
}

AudioClip overlap_add(const std::vector<Chunk>& chunks, std::size_t total_len) {
  if (chunks.empty()) throw Error("overlap_add: no chunks");
  const int rate = chunks.front().clip.sample_rate;
  std::vector<double> acc(total_len, 0.0), wsum(total_len, 0.0);
  for (const auto& c : chunks) {
    const std::size_t len = c.clip.size();
    for (std::size_t i = 0; i < len && c.offset + i < total_len; ++i) {
      // Triangle with strictly positive end points.
      const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(len);
      const double w = 1.0 - std::abs(2.0 * u - 1.0);
      acc[c.offset + i] += w * c.clip.samples[i];
      wsum[c.offset + i] += w;
    }
  }
  AudioClip out(total_len, rate);
  for (std::size_t i = 0; i < total_len; ++i) {
    if (wsum[i] <= 0.0) throw Error("overlap_add: sample " + std::to_string(i) + " is not covered by any chunk");
    out.samples[i] = acc[i] / wsum[i];
  }
  return out;
}

}  // namespace fsmss
