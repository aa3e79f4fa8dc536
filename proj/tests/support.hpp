// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "fsmss/separator.hpp"

namespace fsmss::testing {

// fft 32 / hop 8 on 128 samples: 17 bins x 17 frames, cropped to 16 x 16.
inline SeparatorConfig mini_config(ConditioningMode mode) {
  SeparatorConfig c;
  c.mode = mode;
  c.stft.fft_size = 32;
  c.stft.hop = 8;
  c.unet.depth = 2;
  c.unet.base_channels = 2;
  c.unet.in_freq = 16;
  c.unet.in_frames = 16;
  c.encoder.blocks = 2;
  c.encoder.filters = 2;
  c.encoder.input_bands = 8;
  c.encoder.fmax = 11025.0;
  c.encoder.min_seconds = 0.001;
  c.vocabulary = InstrumentVocabulary({"a", "b", "c"});
  c.chunk_seconds = 128.0 / 22050.0;
  return c;
}

inline AudioClip noise_clip(std::size_t n, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> nd(0.0, scale);
  AudioClip c(n, 22050);
  for (auto& v : c.samples) v = nd(rng);
  return c;
}

}  // namespace fsmss::testing
