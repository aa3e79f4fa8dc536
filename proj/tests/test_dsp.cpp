// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fsmss/dsp.hpp"

using namespace fsmss;
using std::numbers::pi;

namespace {

AudioClip white_noise(std::size_t n, std::uint64_t seed, int rate = 22050) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  AudioClip c(n, rate);
  for (auto& v : c.samples) v = nd(rng);
  return c;
}

AudioClip sine(double hz, std::size_t n, int rate, double amp = 1.0) {
  AudioClip c(n, rate);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2 * pi * hz * static_cast<double>(i) / rate);
  return c;
}

}  // namespace

TEST_CASE("stft config validation") {
  StftConfig c;
  CHECK_NOTHROW(c.validate());
  c.fft_size = 1000;
  CHECK_THROWS(c.validate());
  c.fft_size = 1024;
  c.hop = 300;
  CHECK_THROWS(c.validate());
  c.hop = 768;  // hann^2 does not overlap-add to a constant at 75% hop
  CHECK_THROWS(c.validate());
  c.window = Window::kRect;
  c.hop = 1024;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("frame count") {
  StftConfig c;
  CHECK(c.frames(66150) == 259);
  const auto spec = stft(AudioClip(66150, 22050), c);
  CHECK(spec.bins == 513);
  CHECK(spec.frames == 259);
  for (const auto& v : spec.data) CHECK(v == std::complex<double>(0.0, 0.0));
}

TEST_CASE("pure tone at bin 21 matches direct DFT summation") {
  StftConfig c;
  c.window = Window::kRect;
  const double hz = 21.0 * 22050.0 / 1024.0;
  const auto clip = sine(hz, 22050, 22050);
  const auto spec = stft(clip, c);
  const int n = c.fft_size;
  for (int t = 4; t < spec.frames - 4; t += 7) {
    const long long start = static_cast<long long>(t) * c.hop - n / 2;
    double total = 0.0;
    for (int k = 0; k < spec.bins; ++k) {
      std::complex<double> x{0.0, 0.0};
      for (int j = 0; j < n; ++j)
        x += clip.samples[static_cast<std::size_t>(start + j)] * std::polar(1.0, -2 * pi * k * j / n);
      CHECK(std::abs(spec.at(k, t) - x) < 1e-8 * n);
      total += std::norm(x);
    }
    CHECK(std::norm(spec.at(21, t)) / total > 0.99);
  }
}

TEST_CASE("stft/istft round trip") {
  StftConfig c;
  const auto clip = white_noise(66150, 1);
  const auto back = istft(stft(clip, c));
  REQUIRE(back.size() == clip.size());
  double worst = 0.0;
  for (std::size_t i = 512; i + 512 < clip.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - clip.samples[i]));
  CHECK(worst < 1e-6);

  auto zero = stft(clip, c);
  for (auto& v : zero.data) v = 0.0;
  for (double v : istft(zero).samples) CHECK(v == 0.0);
}

TEST_CASE("compress and decompress") {
  CHECK(compress_value({0.0, 0.0}) == std::complex<double>(0.0, 0.0));
  CHECK(decompress_value({0.0, 0.0}) == std::complex<double>(0.0, 0.0));
  const double phi = 0.7;
  const auto c = compress_value(std::polar(std::exp(1.0) - 1.0, phi));
  CHECK(std::abs(c) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::arg(c) == doctest::Approx(phi).epsilon(1e-12));
  const auto d = decompress_value(std::polar(1.0, phi));
  CHECK(std::abs(d) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
  CHECK(std::arg(d) == doctest::Approx(phi).epsilon(1e-12));

  const auto spec = stft(white_noise(22050, 2), StftConfig{});
  const auto back = decompress(compress(spec));
  double worst = 0.0;
  for (std::size_t i = 0; i < spec.data.size(); ++i) worst = std::max(worst, std::abs(back.data[i] - spec.data[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("apply_mask") {
  const auto spec = stft(white_noise(4096, 3), StftConfig{});
  const auto same = apply_mask(spec, ComplexMask::unit(spec.bins, spec.frames));
  CHECK(same.data == spec.data);
  ComplexMask half{spec.bins, spec.frames, std::vector<std::complex<double>>(spec.data.size(), 0.5)};
  const auto halved = apply_mask(spec, half);
  for (std::size_t i = 0; i < spec.data.size(); i += 97) {
    CHECK(std::abs(halved.data[i]) == doctest::Approx(0.5 * std::abs(spec.data[i])));
    if (std::abs(spec.data[i]) > 1e-9) CHECK(std::arg(halved.data[i]) == doctest::Approx(std::arg(spec.data[i])));
  }
  ComplexMask wrong{spec.bins - 1, spec.frames, {}};
  CHECK_THROWS(apply_mask(spec, wrong));
}

TEST_CASE("resample") {
  const auto a = white_noise(88200, 4, 44100);
  CHECK(resample(a, 22050).size() == 44100);
  CHECK(resample(a, 44100).samples == a.samples);
  CHECK_THROWS(resample(AudioClip(0, 44100), 22050));

  const auto down = resample(sine(1000.0, 44100, 44100), 22050);
  const auto expect = sine(1000.0, 22050, 22050);
  double worst = 0.0;
  for (std::size_t i = 2000; i + 2000 < down.size(); ++i)
    worst = std::max(worst, std::abs(down.samples[i] - expect.samples[i]));
  CHECK(worst < 1e-3);
}

TEST_CASE("chunk offsets and overlap-add") {
  const auto clip = white_noise(9 * 22050, 5);
  const auto chunks = chunk(clip, 3 * 22050, 0.5);
  REQUIRE(chunks.size() == 5);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].offset == i * 33075);
    CHECK(chunks[i].clip.size() == 66150);
  }
  CHECK(chunks.back().offset + chunks.back().clip.size() == clip.size());
  const auto padded = chunk(white_noise(8 * 22050, 5), 3 * 22050, 0.5);
  REQUIRE(padded.size() == 5);
  for (std::size_t i = 44100; i < 66150; ++i) CHECK(padded.back().clip.samples[i] == 0.0);

  const auto back = overlap_add(chunks, clip.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < clip.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - clip.samples[i]));
  CHECK(worst < 1e-9);

  const auto short_chunks = chunk(white_noise(1000, 6), 66150, 0.5);
  REQUIRE(short_chunks.size() == 1);
  CHECK(short_chunks[0].offset == 0);
  CHECK(short_chunks[0].clip.size() == 66150);

  const auto tiles = chunk(clip, 22050, 0.0);
  REQUIRE(tiles.size() == 9);
  for (std::size_t i = 0; i < tiles.size(); ++i) CHECK(tiles[i].offset == i * 22050);
  const auto tiled = overlap_add(tiles, clip.size());
  const auto whole = overlap_add({Chunk{0, clip}}, clip.size());
  for (std::size_t i = 0; i < clip.size(); i += 13) {
    CHECK(tiled.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-12));
    CHECK(whole.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-12));
  }

  std::vector<Chunk> ones{{0, AudioClip(std::vector<double>(100, 1.0), 22050)},
                          {50, AudioClip(std::vector<double>(100, 1.0), 22050)}};
  for (double v : overlap_add(ones, 150).samples) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(overlap_add({Chunk{0, AudioClip(100, 22050)}, Chunk{150, AudioClip(100, 22050)}}, 250));
}

TEST_CASE("stft and istft adjoints pass the dot-product test") {
  StftConfig c;
  c.fft_size = 64;
  c.hop = 16;
  const std::size_t len = 500;
  const auto x = white_noise(len, 7);
  const int frames = c.frames(len);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<std::complex<double>> g(static_cast<std::size_t>(c.bins()) * frames);
  for (auto& v : g) v = {nd(rng), nd(rng)};

  // <stft(x), g> == <x, stft^T(g)>
  const auto X = stft(x, c);
  double lhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += X.data[i].real() * g[i].real() + X.data[i].imag() * g[i].imag();
  const auto xt = stft_adjoint(g, c, len);
  double rhs = 0.0;
  for (std::size_t i = 0; i < len; ++i) rhs += x.samples[i] * xt[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

  // <istft(S), y> == <S, istft^T(y)>
  ComplexSpectrogram S = X;
  S.data = g;
  const auto s = istft(S);
  const auto y = white_noise(len, 9);
  double lhs2 = 0.0;
  for (std::size_t i = 0; i < len; ++i) lhs2 += s.samples[i] * y.samples[i];
  const auto St = istft_adjoint(y.samples, c, frames);
  double rhs2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) rhs2 += g[i].real() * St[i].real() + g[i].imag() * St[i].imag();
  CHECK(lhs2 == doctest::Approx(rhs2).epsilon(1e-10));
}

TEST_CASE("wav round trip, downmix and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "fsmss_test_wav";
  std::filesystem::create_directories(dir);
  WavData stereo{44100, {white_noise(4410, 10).samples, white_noise(4410, 11).samples}};
  write_wav(dir / "s.wav", stereo);
  const auto back = read_wav(dir / "s.wav");
  REQUIRE(back.sample_rate == 44100);
  REQUIRE(back.channels.size() == 2);
  for (std::size_t i = 0; i < 4410; ++i)
    CHECK(back.channels[1][i] == doctest::Approx(stereo.channels[1][i]).epsilon(1e-6));
  const auto mono = downmix(back);
  CHECK(mono.samples[10] == doctest::Approx(0.5 * (back.channels[0][10] + back.channels[1][10])));

  write_wav(dir / "p.wav", stereo, WavEncoding::kPcm16);
  const auto pcm = read_wav(dir / "p.wav");
  for (std::size_t i = 0; i < 4410; i += 11)
    CHECK(std::abs(pcm.channels[0][i] - std::clamp(stereo.channels[0][i], -1.0, 1.0)) < 1.0 / 16384);
  std::filesystem::remove_all(dir);

  AudioClip bad(std::vector<double>{0.0, std::nan("")}, 22050);
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(AudioClip(4, 0).validate());
}
