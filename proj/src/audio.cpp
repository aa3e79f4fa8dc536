// SPDX-License-Identifier: Apache-2.0
#include "fsmss/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace fsmss {

void AudioClip::validate() const {
  if (sample_rate <= 0) throw Error("audio clip sample rate must be positive");
  for (double v : samples)
    if (!std::isfinite(v)) throw Error("audio clip contains non-finite samples");
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double peak(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

double rms_dbfs(const std::vector<double>& x) {
  const double r = rms(x);
  if (r <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(r);
}

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw Error("truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && len >= 26) format = read_le<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data_pos == 0) throw Error("WAV file missing fmt or data chunk: " + path.string());
  if (channels == 0 || rate == 0) throw Error("WAV file has invalid header: " + path.string());

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw Error("unsupported WAV encoding (need PCM16 or float32): " + path.string());

  const std::size_t bytes = bits / 8;
  const std::size_t frames = data_len / (bytes * channels);
  WavData out;
  out.sample_rate = static_cast<int>(rate);
  out.channels.assign(channels, std::vector<double>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t p = data_pos + (f * channels + c) * bytes;
      out.channels[c][f] = pcm16 ? read_le<std::int16_t>(buf, p) / 32768.0
                                 : static_cast<double>(read_le<float>(buf, p));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const WavData& data, WavEncoding encoding) {
  if (data.channels.empty()) throw Error("cannot write WAV with zero channels");
  const std::size_t frames = data.frames();
  for (const auto& ch : data.channels)
    if (ch.size() != frames) throw Error("WAV channels have unequal lengths");

  const std::uint16_t channels = static_cast<std::uint16_t>(data.channels.size());
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = channels * bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * block);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + data_len);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, channels);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.sample_rate) * block);
  put_le<std::uint16_t>(out, block);
  put_le<std::uint16_t>(out, bits);
  out += "data";
  put_le<std::uint32_t>(out, data_len);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& ch : data.channels) {
      const double v = ch[f];
      if (encoding == WavEncoding::kPcm16) {
        const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_le<std::int16_t>(out, static_cast<std::int16_t>(s));
      } else {
        put_le<float>(out, static_cast<float>(v));
      }
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write WAV file: " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("failed writing WAV file: " + path.string());
}

AudioClip downmix(const WavData& data) {
  if (data.channels.empty()) throw Error("cannot downmix zero channels");
  AudioClip clip(data.frames(), data.sample_rate);
  const double scale = 1.0 / static_cast<double>(data.channels.size());
  for (const auto& ch : data.channels)
    for (std::size_t i = 0; i < ch.size(); ++i) clip.samples[i] += ch[i] * scale;
  return clip;
}

AudioClip read_wav_mono(const std::filesystem::path& path) { return downmix(read_wav(path)); }

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  WavData d;
  d.sample_rate = clip.sample_rate;
  d.channels.push_back(clip.samples);
  write_wav(path, d, encoding);
}

}  // namespace fsmss
