// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsmss {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mono waveform. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 22050;

  AudioClip() = default;
  AudioClip(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}
  AudioClip(std::size_t n, int rate) : samples(n, 0.0), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  /// Throws if the rate is not positive or any sample is NaN/Inf.
  void validate() const;
};

double rms(const std::vector<double>& x);
double peak(const std::vector<double>& x);
/// RMS in dB relative to full scale; -inf for silence.
double rms_dbfs(const std::vector<double>& x);

/// Multichannel buffer as read from / written to disk.
struct WavData {
  int sample_rate = 0;
  std::vector<std::vector<double>> channels;

  std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

enum class WavEncoding { kPcm16, kFloat32 };

WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavData& data,
               WavEncoding encoding = WavEncoding::kFloat32);

/// Channel average.
AudioClip downmix(const WavData& data);
AudioClip read_wav_mono(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace fsmss
