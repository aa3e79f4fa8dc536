// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "gradcheck.hpp"

using namespace fsmss;

namespace {

void expect_match(ConditioningMode mode, const LossConfig& loss, std::uint64_t seed) {
  const auto r = testing::gradient_check(mode, loss, seed);
  CHECK(r.checked > 0);
  for (const auto& f : r.failures) {
    INFO(f.param, "[", f.index, "] analytic ", f.analytic, " numeric ", f.numeric);
    CHECK(f.rel_error < 1e-4);
  }
}

}  // namespace

TEST_CASE("gradients: class conditioning, both loss terms") {
  expect_match(ConditioningMode::kClass, LossConfig{}, 11);
}

TEST_CASE("gradients: few-shot encoder and averaging") {
  expect_match(ConditioningMode::kFewShot, LossConfig{}, 12);
}

TEST_CASE("gradients: positive/negative fusion") {
  expect_match(ConditioningMode::kFewShotNeg, LossConfig{}, 13);
}

TEST_CASE("gradients: each loss term alone") {
  LossConfig sdr_only;
  sdr_only.w_mae = 0.0;
  expect_match(ConditioningMode::kFewShot, sdr_only, 14);
  LossConfig mae_only;
  mae_only.w_sdr = 0.0;
  expect_match(ConditioningMode::kFewShot, mae_only, 15);
  LossConfig ratio;
  ratio.sdr_form = SdrForm::kRatio;
  expect_match(ConditioningMode::kFewShot, ratio, 16);
}
