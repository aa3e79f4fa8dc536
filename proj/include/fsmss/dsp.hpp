// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "fsmss/audio.hpp"

namespace fsmss {

enum class Window { kHann, kRect };

std::string to_string(Window w);
Window window_from_string(const std::string& name);

struct StftConfig {
  int fft_size = 1024;
  int hop = 256;
  Window window = Window::kHann;
  bool centered = true;

  /// Throws unless fft_size is a power of two, hop divides fft_size and the
  /// squared window overlap-adds to a constant at this hop.
  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
  int frames(std::size_t length) const;
  /// Periodic analysis window (also used for synthesis).
  std::vector<double> window_samples() const;

  bool operator==(const StftConfig&) const = default;
};

/// Complex time-frequency matrix stored bin-major: data[bin * frames + frame].
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> data;
  StftConfig config;
  int sample_rate = 22050;
  /// Length of the signal the spectrogram was computed from.
  std::size_t length = 0;

  std::complex<double>& at(int bin, int frame) { return data[static_cast<std::size_t>(bin) * frames + frame]; }
  const std::complex<double>& at(int bin, int frame) const {
    return data[static_cast<std::size_t>(bin) * frames + frame];
  }
};

/// Complex multiplier with the same layout as ComplexSpectrogram.
struct ComplexMask {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> data;

  static ComplexMask unit(int bins, int frames) {
    return {bins, frames, std::vector<std::complex<double>>(static_cast<std::size_t>(bins) * frames, 1.0)};
  }
};

/// Windowed-sinc taps per side, counted in zero crossings of the lower rate.
inline constexpr int kResampleHalfTaps = 32;
inline constexpr double kResampleKaiserBeta = 8.6;
inline constexpr double kResampleCutoff = 0.94;

/// Band-limited resampling with a Kaiser-windowed sinc kernel of
/// 2 * kResampleHalfTaps taps at the lower rate. Output length is
/// round(len * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg);
/// Window-sum-square normalised overlap-add synthesis; returns spec.length samples.
AudioClip istft(const ComplexSpectrogram& spec);

/// Magnitude m -> log1p(m), phase unchanged.
ComplexSpectrogram compress(const ComplexSpectrogram& spec);
/// Magnitude m -> expm1(m), phase unchanged.
ComplexSpectrogram decompress(const ComplexSpectrogram& spec);
std::complex<double> compress_value(std::complex<double> x);
std::complex<double> decompress_value(std::complex<double> x);

ComplexSpectrogram apply_mask(const ComplexSpectrogram& spec, const ComplexMask& mask);

struct Chunk {
  std::size_t offset = 0;
  AudioClip clip;
};

/// Fixed-length chunks with hop chunk_len * (1 - overlap); the last chunk is
/// zero-padded and every input sample is covered.
std::vector<Chunk> chunk(const AudioClip& clip, std::size_t chunk_len, double overlap);

/// Cross-fade chunks with triangular weights normalised to sum to one at every
/// sample. Samples of a chunk past total_len are dropped.
AudioClip overlap_add(const std::vector<Chunk>& chunks, std::size_t total_len);

// Adjoints of the (real-linear) stft and istft maps, used for backpropagation.
// Complex gradients carry d/dRe in the real part and d/dIm in the imaginary part.

/// Gradient w.r.t. the input signal given a gradient w.r.t. stft(x).
std::vector<double> stft_adjoint(const std::vector<std::complex<double>>& grad_spec,
                                 const StftConfig& cfg, std::size_t length);
/// Gradient w.r.t. the spectrogram given a gradient w.r.t. istft(spec).
std::vector<std::complex<double>> istft_adjoint(const std::vector<double>& grad_signal,
                                                const StftConfig& cfg, int frames);

}  // namespace fsmss
