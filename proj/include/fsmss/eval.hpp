// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fsmss/data.hpp"
#include "fsmss/separator.hpp"

namespace fsmss {

/// Reported in place of +inf for a perfect reconstruction.
inline constexpr double kSdrCapDb = 60.0;
/// Reference windows with RMS below this are skipped.
inline constexpr double kSilentWindowRms = 1e-6;

struct SdrValue {
  double db = 0.0;
  /// The value hit kSdrCapDb.
  bool capped = false;
};

/// Median over 1 s non-overlapping windows (a trailing partial window
/// included) of 10 log10(|s_w|^2 / |s_w - e_w|^2), skipping silent reference
/// windows.
SdrValue compute_sdr(const AudioClip& estimate, const AudioClip& reference);

enum class ConditioningSource { kSameTrack, kCrossTrack };
enum class ConditioningPurity { kSingleSource, kMultiSource };

std::string to_string(ConditioningSource s);
std::string to_string(ConditioningPurity p);
ConditioningSource conditioning_source_from_string(const std::string& s);
ConditioningPurity conditioning_purity_from_string(const std::string& s);

struct EvalProtocol {
  int n_shots = 5;
  int iterations = 10;
  ConditioningSource source = ConditioningSource::kSameTrack;
  ConditioningPurity purity = ConditioningPurity::kSingleSource;
  bool use_negatives = false;
  std::uint64_t seed = 0;
  double example_seconds = 3.0;
  /// Joint gain so the mixture peaks here; 0 disables.
  double normalize_peak = 0.9;
  double silence_dbfs = -60.0;

  void validate() const;
  bool operator==(const EvalProtocol&) const = default;
};

struct TrackScore {
  std::string track_id;
  std::string target_class;
  std::vector<double> sdr;
  std::vector<bool> capped;
  double mean = 0.0;
  /// Population standard deviation over iterations.
  double std = 0.0;
  /// Unprocessed mixture against the reference.
  double mixture_sdr = 0.0;
};

struct ClassSummary {
  std::string target_class;
  int tracks = 0;
  double mean = 0.0;
  double median = 0.0;
  /// Mean over tracks of the per-track std.
  double mean_track_std = 0.0;
  /// Std over iterations of the across-track mean.
  double std_of_iteration_means = 0.0;
  double mixture_mean = 0.0;
};

struct EvalReport {
  EvalProtocol protocol;
  std::string mode;
  std::vector<TrackScore> tracks;
  std::vector<ClassSummary> classes;

  const ClassSummary& summary(const std::string& target_class) const;
};

/// Resample to the model rate, separate 3 s chunks at 50% overlap with one
/// conditioning vector, overlap-add and resample back.
template <typename T>
AudioClip separate_track(const AudioClip& mixture, const ConditioningVector& z, Separator<T>& model);

/// Conditioning vector for one evaluation iteration.
template <typename T>
ConditioningVector draw_conditioning(const Corpus& corpus, std::size_t track_index, const std::string& target_class,
                                     Separator<T>& model, const EvalProtocol& protocol, std::mt19937_64& rng);

/// Scores `target_class` of corpus[track_index]; the rest of the corpus
/// supplies cross-track examples.
template <typename T>
TrackScore evaluate_track(const Corpus& corpus, std::size_t track_index, const std::string& target_class,
                          Separator<T>& model, const EvalProtocol& protocol);

/// Every (class, track) pair where the track contains the class. An empty
/// class list means every class in the corpus.
template <typename T>
EvalReport evaluate_corpus(const Corpus& corpus, const std::vector<std::string>& classes, Separator<T>& model,
                           const EvalProtocol& protocol);

/// One JSON record per track-iteration, then one summary record per class.
void write_report_jsonl(const EvalReport& report, std::ostream& out);
/// Plain-text table of the class summaries.
void print_summary(const EvalReport& report, std::ostream& out);

}  // namespace fsmss
