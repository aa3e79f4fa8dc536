// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsmss/audio.hpp"

namespace fsmss {

struct Stem {
  std::string class_name;
  AudioClip clip;
};

/// Aligned solo-instrument stems; the mixture is their sample-wise sum.
struct MultiTrack {
  std::string id;
  std::vector<Stem> stems;

  int sample_rate() const { return stems.empty() ? 0 : stems.front().clip.sample_rate; }
  std::size_t length() const { return stems.empty() ? 0 : stems.front().clip.size(); }
  AudioClip mixture() const;
  /// nullptr when the class is absent.
  const Stem* find(const std::string& class_name) const;
  std::vector<std::string> classes() const;
  /// Throws unless there is at least one stem, classes are distinct and all
  /// stems share length and rate.
  void validate() const;
};

using Corpus = std::vector<MultiTrack>;

struct WeightedCorpus {
  const Corpus* tracks = nullptr;
  double weight = 1.0;
};

struct SamplerConfig {
  int min_shots = 1;
  int max_shots = 5;
  double chunk_seconds = 3.0;
  double multi_source_prob = 0.0;
  bool cross_track = false;
  bool use_negatives = false;
  /// Classes never used as targets (they may still sound in mixtures).
  std::vector<std::string> holdout;
  double silence_dbfs = -60.0;
  int max_retries = 64;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const SamplerConfig&) const = default;
};

/// Where a conditioning chunk came from.
struct ChunkSource {
  std::string track_id;
  std::string stem_class;
  std::size_t offset = 0;
  /// Class mixed in at unity gain, empty for a single-source chunk.
  std::string extra_class;
};

struct TrainingExample {
  AudioClip mixture;
  AudioClip target;
  std::string target_class;
  std::string track_id;
  std::size_t offset = 0;
  std::vector<AudioClip> positives;
  std::vector<AudioClip> negatives;
  std::vector<ChunkSource> positive_sources;
  std::vector<ChunkSource> negative_sources;
};

/// Copy of samples [offset, offset + len), zero-padded past the end.
AudioClip slice(const AudioClip& clip, std::size_t offset, std::size_t len);
bool is_silent(const AudioClip& clip, double silence_dbfs);

TrainingExample sample_training_example(const std::vector<WeightedCorpus>& corpora, const SamplerConfig& cfg,
                                        std::mt19937_64& rng);
TrainingExample sample_training_example(const Corpus& corpus, const SamplerConfig& cfg, std::mt19937_64& rng);

/// Options for drawing conditioning chunks of one class.
struct ConditioningDraw {
  int n = 1;
  std::size_t chunk_len = 0;
  /// Chunks from other tracks of the class instead of the source track.
  bool cross_track = false;
  /// Probability that each chunk mixes in one other stem of its track.
  double multi_source_prob = 0.0;
  double silence_dbfs = -60.0;
  int max_retries = 64;
  /// Interval of the source track that chunks must not overlap; none when
  /// exclude_len is zero.
  std::size_t exclude_offset = 0;
  std::size_t exclude_len = 0;
};

/// Draws n positive chunks of `class_name` for track `track_index`.
std::vector<AudioClip> draw_positive_examples(const Corpus& corpus, std::size_t track_index,
                                              const std::string& class_name, const ConditioningDraw& draw,
                                              std::mt19937_64& rng, std::vector<ChunkSource>* sources = nullptr);
/// Draws n chunks of random non-target stems of the track, restricted to
/// `allowed` classes when it is non-empty.
std::vector<AudioClip> draw_negative_examples(const MultiTrack& track, const std::string& target_class,
                                              const std::vector<std::string>& allowed, const ConditioningDraw& draw,
                                              std::mt19937_64& rng, std::vector<ChunkSource>* sources = nullptr);

// ------------------------------------------------------------ synthesis

enum class Archetype { kHarmonic, kPluck, kNoise };

std::string to_string(Archetype a);
Archetype archetype_from_string(const std::string& s);

/// Timbre ranges for one synthetic class. For tonal archetypes the pitch range
/// is the fundamental; for noise it is the band-pass centre.
struct SynthClass {
  std::string name;
  Archetype archetype = Archetype::kHarmonic;
  double freq_lo = 220.0;
  double freq_hi = 660.0;
  int harmonics = 8;
  /// Harmonic k has amplitude k^-rolloff.
  double rolloff_lo = 1.0;
  double rolloff_hi = 1.5;
  /// Amplitude decay time constant (s); note length for sustained tones.
  double decay_lo = 0.2;
  double decay_hi = 0.5;
  /// Note onsets per second.
  double note_rate = 3.0;
  /// Band-pass quality factor for noise bursts.
  double q = 2.0;

  bool operator==(const SynthClass&) const = default;
};

struct SynthSpec {
  std::vector<SynthClass> classes;
  int tracks = 40;
  double track_seconds = 30.0;
  int sample_rate = 22050;
  int min_stems = 2;
  int max_stems = 5;
  /// Per-stem level jitter (uniform, +-dB) around equal RMS.
  double level_jitter_db = 3.0;
  double mixture_peak = 0.9;
  /// Documented minimum spectral-centroid distance between classes.
  double class_gap_hz = 300.0;
  std::uint64_t seed = 0;

  /// bass, synthesizer, drums.
  static SynthSpec three_class();
  /// three_class plus guitar and percussion.
  static SynthSpec five_class();
  /// Eight classes on a centroid ladder from bass to drums, for held-out-class
  /// experiments.
  static SynthSpec eight_class();
  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

Corpus generate_synthetic_corpus(const SynthSpec& spec);
/// Renders one stem of a class with per-track timbre drawn from rng.
AudioClip synthesize_stem(const SynthClass& cls, std::size_t length, int sample_rate, std::mt19937_64& rng);
double spectral_centroid(const AudioClip& clip);

// ------------------------------------------------------------ files

/// File-name stem -> class name; a value of "-" skips the file.
class StemMapping {
 public:
  StemMapping() = default;
  explicit StemMapping(std::map<std::string, std::string> table) : table_(std::move(table)) {}

  /// Identity entries for every name.
  static StemMapping identity(const std::vector<std::string>& names);
  /// Lines of `file_stem = class`; '#' starts a comment.
  static StemMapping from_text(const std::string& text);
  static StemMapping load(const std::filesystem::path& path);

  /// Throws listing the table when the name is unmapped.
  const std::string& lookup(const std::string& file_stem) const;
  std::string describe() const;
  const std::map<std::string, std::string>& table() const { return table_; }

 private:
  std::map<std::string, std::string> table_;
};

/// One WAV per stem; stems are downmixed and resampled to `sample_rate`.
MultiTrack load_multitrack_dir(const std::filesystem::path& dir, const StemMapping& mapping,
                               int sample_rate = 22050);
/// Every sub-directory of `dir` is a track; sorted by name.
Corpus load_corpus_dir(const std::filesystem::path& dir, const StemMapping& mapping, int sample_rate = 22050);
/// Writes dir/<track>/<class>.wav and dir/manifest.json.
void write_corpus_dir(const Corpus& corpus, const std::filesystem::path& dir);

/// Deterministic split of the tracks: the last ceil(fraction * n) of a seeded
/// shuffle become the second half.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed);

}  // namespace fsmss
