// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "fsmss/separator.hpp"
#include "support.hpp"

using namespace fsmss;

TEST_CASE("film on one example") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};  // 2 channels x 3 bins
  CHECK(film(x, 2, {{1, 1}, {0, 0}}) == x);
  const auto flat = film(x, 2, {{0, 0}, {7, -3}});
  CHECK(flat == std::vector<double>{7, 7, 7, -3, -3, -3});
  const auto zeroed = film(std::vector<double>(6, 2.0), 2, {{0.5, 1}, {-1, 0}});
  CHECK(zeroed[0] == 0.0);
  CHECK(zeroed[2] == 0.0);
  CHECK(zeroed[3] == 2.0);
  CHECK_THROWS(film(x, 2, {{1}, {0}}));
  CHECK_THROWS(film(x, 4, {{1, 1, 1, 1}, {0, 0, 0, 0}}));
}

TEST_CASE("film generator starts at the identity modulation") {
  FilmGenerator<double> gen(18, 8);
  gen.init();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Tensor<double> z(3, 18);
  for (auto& v : z.data) v = nd(rng);
  auto [gamma, beta] = gen.forward(z);
  for (double g : gamma.data) CHECK(std::abs(g - 1.0) < 1e-6);
  for (double b : beta.data) CHECK(std::abs(b) < 1e-6);

  for (auto& v : gen.gamma_head().bias.value.data) v = nd(rng);
  for (auto& v : gen.beta_head().bias.value.data) v = nd(rng);
  for (auto& v : gen.gamma_head().weight.value.data) v = nd(rng);
  auto [g0, b0] = gen.forward(Tensor<double>(1, 18));
  for (int c = 0; c < 8; ++c) {
    CHECK(g0.data[c] == gen.gamma_head().bias.value.data[c]);
    CHECK(b0.data[c] == gen.beta_head().bias.value.data[c]);
  }
  CHECK_THROWS(gen.forward(Tensor<double>(1, 17)));
}

TEST_CASE("mask values are sigmoid-bounded with the phase of (a, b)") {
  const auto zero = mask_value(0.0, 0.0);
  CHECK(zero.real() == doctest::Approx(0.5));
  CHECK(zero.imag() == 0.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = nd(rng), b = nd(rng);
    const auto m = mask_value(a, b);
    CHECK(std::abs(m) > 0.0);
    CHECK(std::abs(m) < 1.0);
    CHECK(std::abs(m) == doctest::Approx(1.0 / (1.0 + std::exp(-std::hypot(a, b)))));
    CHECK(std::arg(m) == doctest::Approx(std::atan2(b, a)));
  }
}

TEST_CASE("mask vjp matches finite differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 50; ++i) {
    const double a = nd(rng), b = nd(rng);
    const std::complex<double> g{nd(rng), nd(rng)};
    const auto vjp = mask_value_vjp(a, b, g);
    auto f = [&](double x, double y) {
      const auto m = mask_value(x, y);
      return g.real() * m.real() + g.imag() * m.imag();
    };
    const double h = 1e-6;
    CHECK(vjp[0] == doctest::Approx((f(a + h, b) - f(a - h, b)) / (2 * h)).epsilon(1e-6));
    CHECK(vjp[1] == doctest::Approx((f(a, b + h) - f(a, b - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("unet config and output shape") {
  UNetConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.channels(0) == 16);
  CHECK(c.channels(5) == 512);
  c.in_freq = 500;
  CHECK_THROWS(c.validate());

  auto cfg = testing::mini_config(ConditioningMode::kClass);
  Separator<double> model(cfg);
  model.init(4);
  std::mt19937_64 rng(4);
  const auto mixture = testing::noise_clip(cfg.chunk_samples(), rng);
  const auto spec = compress(stft(mixture, cfg.stft));
  const auto mask = model.unet_forward(spec, model.condition_on_class("b"));
  CHECK(mask.bins == 16);
  CHECK(mask.frames == 16);
  for (const auto& m : mask.data) {
    CHECK(std::abs(m) > 0.0);
    CHECK(std::abs(m) < 1.0);
  }
}

TEST_CASE("full-size network maps 512x256 input to a 2x512x256 mask") {
  SeparatorConfig cfg;
  cfg.mode = ConditioningMode::kClass;
  Separator<float> model(cfg);
  model.init(5);
  std::mt19937_64 rng(5);
  const auto mixture = testing::noise_clip(cfg.chunk_samples(), rng);
  const auto spec = compress(stft(mixture, cfg.stft));
  CHECK(spec.bins == 513);
  CHECK(spec.frames == 259);
  const auto mask = model.unet_forward(spec, model.condition_on_class(cfg.vocabulary.name(0)));
  CHECK(mask.bins == 512);
  CHECK(mask.frames == 256);
}

TEST_CASE("separate_chunk preserves length and silence") {
  auto cfg = testing::mini_config(ConditioningMode::kClass);
  Separator<double> model(cfg);
  model.init(6);
  const auto z = model.condition_on_class("a");
  const auto out = model.separate_chunk(AudioClip(cfg.chunk_samples(), 22050), z);
  CHECK(out.size() == cfg.chunk_samples());
  CHECK(rms(out.samples) < 1e-6);
  std::mt19937_64 rng(6);
  CHECK(model.separate_chunk(testing::noise_clip(100, rng), z).size() == 100);
}

TEST_CASE("reconstruct with a unit mask over the whole spectrogram is the identity") {
  StftConfig s;
  s.fft_size = 64;
  s.hop = 16;
  std::mt19937_64 rng(7);
  const auto clip = testing::noise_clip(1024, rng);
  const auto comp = compress(stft(clip, s));
  const auto out = reconstruct(comp, ComplexMask::unit(comp.bins, comp.frames));
  for (std::size_t i = 32; i + 32 < clip.size(); ++i) CHECK(out.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-9));
}

TEST_CASE("state round trip and shape validation") {
  auto cfg = testing::mini_config(ConditioningMode::kFewShotNeg);
  Separator<float> a(cfg), b(cfg);
  a.init(8);
  b.init(9);
  auto st = a.state();
  b.load_state(st);
  CHECK(b.state() == st);
  st.begin()->second.data.pop_back();
  CHECK_THROWS(b.load_state(st));
  auto missing = a.state();
  missing.erase(missing.begin());
  CHECK_THROWS(b.load_state(missing));
}
