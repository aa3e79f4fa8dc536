// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "fsmss/loss.hpp"

using namespace fsmss;

namespace {

std::vector<double> noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.3);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

ComplexSpectrogram single_bin(std::complex<double> v) {
  ComplexSpectrogram s;
  s.bins = 1;
  s.frames = 1;
  s.data = {v};
  return s;
}

StftConfig small_stft() {
  StftConfig c;
  c.fft_size = 64;
  c.hop = 16;
  return c;
}

}  // namespace

TEST_CASE("sdr loss values") {
  const LossConfig cfg;
  CHECK(sdr_loss({1, 1}, {1, 0}, cfg) == doctest::Approx(-1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(sdr_loss({0, 1}, {1, 0}, cfg) == 0.0);
  CHECK(sdr_loss({1, 2}, {0, 0}, cfg) == 0.0);
  std::mt19937_64 rng(1);
  const auto s = noise(100, rng);
  double ss = 0.0;
  for (double x : s) ss += x * x;
  CHECK(sdr_loss(s, s, cfg) == doctest::Approx(-ss * ss / 1e-8).epsilon(1e-4));
  CHECK_THROWS(sdr_loss({1, 2, 3}, {1, 2}, cfg));
}

TEST_CASE("sdr loss is scale invariant in the estimate") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> alpha(0.1, 10.0);
  for (int i = 0; i < 50; ++i) {
    const auto s = noise(256, rng), e = noise(256, rng);
    auto scaled = e;
    const double a = alpha(rng);
    for (auto& x : scaled) x *= a;
    CHECK(sdr_loss(scaled, s) == doctest::Approx(sdr_loss(e, s)).epsilon(1e-6));
  }
}

TEST_CASE("magnitude mae") {
  CHECK(mag_mae(single_bin({3, 0}), single_bin({1, 0})) == doctest::Approx(std::log1p(3.0) - std::log1p(1.0)));
  CHECK(mag_mae(single_bin(std::polar(2.0, 0.3)), single_bin(std::polar(2.0, -1.4))) == doctest::Approx(0.0));
  std::mt19937_64 rng(3);
  const auto spec = stft(AudioClip(noise(512, rng), 22050), small_stft());
  CHECK(mag_mae(spec, spec) == 0.0);
  auto other = spec;
  other.frames -= 1;
  other.data.resize(other.data.size() - static_cast<std::size_t>(other.bins));
  CHECK_THROWS(mag_mae(spec, other));
}

TEST_CASE("total loss composition") {
  std::mt19937_64 rng(4);
  const AudioClip s(noise(512, rng), 22050);
  const auto stft_cfg = small_stft();
  LossConfig cfg;
  cfg.w_sdr = 0.7;
  cfg.w_mae = 1.3;
  const auto perfect = total_loss(s, s, stft_cfg, cfg);
  CHECK(perfect.mag_mae_term == 0.0);
  CHECK(perfect.total == doctest::Approx(cfg.w_sdr * perfect.sdr_term));

  const auto zero = total_loss(AudioClip(512, 22050), s, stft_cfg, cfg);
  CHECK(zero.sdr_term == doctest::Approx(30.0));
  cfg.sdr_form = SdrForm::kRatio;
  CHECK(total_loss(AudioClip(512, 22050), s, stft_cfg, cfg).sdr_term == 0.0);
  const auto ref = compress(stft(s, stft_cfg));
  double mean = 0.0;
  for (const auto& v : ref.data) mean += std::abs(v);
  mean /= static_cast<double>(ref.data.size());
  CHECK(zero.mag_mae_term == doctest::Approx(mean).epsilon(1e-12));

  const auto silent = total_loss(s, AudioClip(512, 22050), stft_cfg, cfg);
  CHECK(silent.sdr_skipped);
  CHECK(silent.sdr_term == 0.0);
}

TEST_CASE("total loss decreases toward the reference") {
  std::mt19937_64 rng(5);
  const auto stft_cfg = small_stft();
  int monotone = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = noise(512, rng), n = noise(512, rng);
    double prev = INFINITY;
    bool ok = true;
    for (int k = 10; k <= 20; ++k) {
      const double t = 0.05 * k;
      AudioClip e(512, 22050);
      for (std::size_t i = 0; i < 512; ++i) e.samples[i] = (1 - t) * n[i] + t * s[i];
      const double l = total_loss(e, AudioClip(s, 22050), stft_cfg).total;
      if (!(l < prev)) ok = false;
      prev = l;
    }
    monotone += ok ? 1 : 0;
  }
  CHECK(monotone >= 95);
}

TEST_CASE("loss gradient matches finite differences") {
  std::mt19937_64 rng(6);
  const auto stft_cfg = small_stft();
  const AudioClip s(noise(256, rng), 22050);
  const AudioClip e(noise(256, rng), 22050);
  for (SdrForm form : {SdrForm::kDecibel, SdrForm::kRatio}) {
    LossConfig cfg;
    cfg.sdr_form = form;
    std::vector<double> grad;
    total_loss_with_grad(e, s, stft_cfg, cfg, 0.5, grad);
    REQUIRE(grad.size() == 256);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 256; i += 7) {
      auto up = e, down = e;
      up.samples[i] += h;
      down.samples[i] -= h;
      const double numeric =
          0.5 * (total_loss(up, s, stft_cfg, cfg).total - total_loss(down, s, stft_cfg, cfg).total) / (2 * h);
      CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("decibel sdr term") {
  const LossConfig cfg;
  CHECK(sdr_loss_db({1, 1}, {1, 0}, cfg) == doctest::Approx(-10.0 * std::log10(1.0 + cfg.sdr_db_floor)));
  CHECK(sdr_loss_db({0, 1}, {1, 0}, cfg) == doctest::Approx(30.0));
  CHECK(sdr_loss_db({1, 0}, {0, 0}, cfg) == 0.0);
  std::mt19937_64 rng(7);
  const auto s = noise(300, rng), e = noise(300, rng);
  CHECK(sdr_loss_db(e, s, cfg) == doctest::Approx(-10.0 * std::log10(-sdr_loss(e, s, cfg) + cfg.sdr_db_floor)));
  const auto g = sdr_loss_db_grad(e, s, cfg);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 300; i += 11) {
    auto up = e, down = e;
    up[i] += h;
    down[i] -= h;
    CHECK(g[i] == doctest::Approx((sdr_loss_db(up, s, cfg) - sdr_loss_db(down, s, cfg)) / (2 * h)).epsilon(1e-5));
  }
  CHECK(sdr_form_from_string(to_string(SdrForm::kRatio)) == SdrForm::kRatio);
  CHECK_THROWS(sdr_form_from_string("linear"));
}
