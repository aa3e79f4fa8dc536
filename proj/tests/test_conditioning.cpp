// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "doctest.h"
#include "fsmss/separator.hpp"
#include "support.hpp"

using namespace fsmss;

namespace {

ConditioningVector random_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  ConditioningVector v;
  v.values.resize(static_cast<std::size_t>(dim));
  for (auto& x : v.values) x = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("vocabulary and one-hot vectors") {
  const InstrumentVocabulary vocab;
  CHECK(vocab.size() == 18);
  const auto first = one_hot(vocab.name(0), vocab);
  CHECK(first.kind == VectorKind::kClass);
  CHECK(first.values[0] == 1.0);
  CHECK(std::count(first.values.begin(), first.values.end(), 0.0) == 17);
  const auto last = one_hot(vocab.name(17), vocab);
  CHECK(last.values[17] == 1.0);
  for (int i = 0; i < vocab.size(); ++i) {
    const auto v = one_hot(vocab.name(i), vocab);
    CHECK(std::max_element(v.values.begin(), v.values.end()) - v.values.begin() == i);
  }
  try {
    one_hot("kazoo", vocab);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(vocab.name(3)) != std::string::npos);
  }
  const auto parsed = InstrumentVocabulary::from_text("# mine\nbass\n\ndrums\n");
  CHECK(parsed.names() == std::vector<std::string>{"bass", "drums"});
  CHECK_THROWS(InstrumentVocabulary::from_text("bass\nbass\n"));
}

TEST_CASE("aggregate") {
  std::mt19937_64 rng(1);
  std::vector<ConditioningVector> vs;
  for (int i = 0; i < 5; ++i) vs.push_back(random_vector(512, rng));
  const auto base = aggregate(vs);
  for (int p = 0; p < 20; ++p) {
    std::shuffle(vs.begin(), vs.end(), rng);
    CHECK(aggregate(vs).values == base.values);
  }
  CHECK(aggregate({vs[0]}).values == vs[0].values);
  for (int k = 1; k <= 5; ++k) {
    const auto rep = aggregate(std::vector<ConditioningVector>(static_cast<std::size_t>(k), vs[1]));
    for (std::size_t i = 0; i < 512; ++i) CHECK(rep.values[i] == doctest::Approx(vs[1].values[i]).epsilon(1e-15));
  }
  ConditioningVector e0, e1;
  e0.values = {1, 0, 0};
  e1.values = {0, 1, 0};
  CHECK(aggregate({e0, e1}).values == std::vector<double>{0.5, 0.5, 0});
  CHECK_THROWS(aggregate({}));
  CHECK_THROWS(aggregate({e0, one_hot("bass", InstrumentVocabulary{})}));
  ConditioningVector shorter;
  shorter.values = {1, 2};
  CHECK_THROWS(aggregate({e0, shorter}));
}

TEST_CASE("mel filterbank") {
  CHECK(mel_to_hz(hz_to_mel(440.0)) == doctest::Approx(440.0));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0));
  const MelFilterbank bank(128, 1024, 22050, 0.0, 11025.0);
  CHECK(bank.bands() == 128);
  for (int b = 0; b < 128; ++b) {
    double total = 0.0;
    for (int k = 0; k < 513; ++k) {
      CHECK(bank.weight(b, k) >= 0.0);
      total += bank.weight(b, k);
    }
    CHECK(total > 0.0);
  }
}

TEST_CASE("encoder output width for different example lengths") {
  SeparatorConfig cfg;
  cfg.mode = ConditioningMode::kFewShotNeg;
  CHECK(cfg.encoder.embedding_dim() == 512);
  Separator<float> model(cfg);
  model.init(2);
  std::mt19937_64 rng(2);
  for (double seconds : {0.5, 3.0, 10.0}) {
    const auto z = model.encode_example(testing::noise_clip(static_cast<std::size_t>(seconds * 22050), rng));
    CHECK(z.dim() == 512);
    CHECK(z.kind == VectorKind::kEmbedding);
  }
  CHECK_THROWS(model.encode_example(testing::noise_clip(2000, rng)));

  const auto silent_a = model.encode_example(AudioClip(22050, 22050));
  const auto silent_b = model.encode_example(AudioClip(22050, 22050));
  CHECK(silent_a.values == silent_b.values);

  const auto pos = model.encode_example(testing::noise_clip(22050, rng));
  const auto neg = model.encode_example(testing::noise_clip(22050, rng));
  const auto fused = model.fuse(pos, neg);
  CHECK(fused.dim() == 512);
  for (double v : fused.values) CHECK(v >= 0.0);
  CHECK_THROWS(model.fuse(pos, one_hot("bass", cfg.vocabulary)));

  const auto z = model.condition_on_examples({testing::noise_clip(22050, rng)}, {testing::noise_clip(22050, rng)});
  CHECK_NOTHROW(model.check_conditioning(z));
  CHECK_THROWS(model.check_conditioning(one_hot("bass", cfg.vocabulary)));
}

TEST_CASE("examples at another sample rate are resampled") {
  auto cfg = testing::mini_config(ConditioningMode::kFewShot);
  Separator<double> model(cfg);
  model.init(3);
  std::mt19937_64 rng(3);
  AudioClip hi = testing::noise_clip(256, rng);
  hi.sample_rate = 44100;
  CHECK(model.encode_example(hi).dim() == cfg.conditioning_dim());
}

TEST_CASE("class mode rejects example conditioning") {
  Separator<double> model(testing::mini_config(ConditioningMode::kClass));
  model.init(4);
  std::mt19937_64 rng(4);
  CHECK_THROWS(model.encode_example(testing::noise_clip(128, rng)));
  CHECK_THROWS(model.check_conditioning(random_vector(8, rng)));
}
