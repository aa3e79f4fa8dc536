// SPDX-License-Identifier: Apache-2.0
#include "fsmss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "json.hpp"

namespace fsmss {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // Shifted by the first value so that identical inputs give exactly zero.
  const double n = static_cast<double>(v.size());
  double s = 0.0, s2 = 0.0;
  for (double x : v) {
    s += x - v.front();
    s2 += (x - v.front()) * (x - v.front());
  }
  return std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::mt19937_64 iteration_rng(const EvalProtocol& p, const std::string& track_id, const std::string& cls, int it) {
  const std::uint64_t a = fnv1a(track_id), b = fnv1a(cls);
  std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(it)};
  return std::mt19937_64(seq);
}

}  // namespace

SdrValue compute_sdr(const AudioClip& estimate, const AudioClip& reference) {
  if (estimate.size() != reference.size()) throw Error("compute_sdr: estimate and reference lengths differ");
  if (estimate.sample_rate != reference.sample_rate) throw Error("compute_sdr: sample rates differ");
  const auto win = static_cast<std::size_t>(reference.sample_rate);
  std::vector<double> values;
  for (std::size_t start = 0; start < reference.size(); start += win) {
    const std::size_t end = std::min(start + win, reference.size());
    double ref = 0.0, err = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const double s = reference.samples[i], d = s - estimate.samples[i];
      ref += s * s;
      err += d * d;
    }
    if (std::sqrt(ref / static_cast<double>(end - start)) < kSilentWindowRms) continue;
    values.push_back(err == 0.0 ? kSdrCapDb : std::min(kSdrCapDb, 10.0 * std::log10(ref / err)));
  }
  if (values.empty()) throw Error("compute_sdr: every reference window is silent");
  const double db = median(std::move(values));
  return {db, db >= kSdrCapDb};
}

std::string to_string(ConditioningSource s) { return s == ConditioningSource::kSameTrack ? "same-track" : "cross-track"; }
std::string to_string(ConditioningPurity p) {
  return p == ConditioningPurity::kSingleSource ? "single-source" : "multi-source";
}

ConditioningSource conditioning_source_from_string(const std::string& s) {
  if (s == "same-track") return ConditioningSource::kSameTrack;
  if (s == "cross-track") return ConditioningSource::kCrossTrack;
  throw Error("unknown conditioning source '" + s + "' (expected same-track or cross-track)");
}

ConditioningPurity conditioning_purity_from_string(const std::string& s) {
  if (s == "single-source") return ConditioningPurity::kSingleSource;
  if (s == "multi-source") return ConditioningPurity::kMultiSource;
  throw Error("unknown conditioning purity '" + s + "' (expected single-source or multi-source)");
}

void EvalProtocol::validate() const {
  if (n_shots < 1) throw Error("eval.n_shots must be at least 1");
  if (iterations < 1) throw Error("eval.iterations must be at least 1");
  if (example_seconds <= 0.0) throw Error("eval.example_seconds must be positive");
  if (normalize_peak < 0.0) throw Error("eval.normalize_peak must be non-negative");
}

const ClassSummary& EvalReport::summary(const std::string& target_class) const {
  for (const auto& c : classes)
    if (c.target_class == target_class) return c;
  throw Error("report has no class '" + target_class + "'");
}

template <typename T>
AudioClip separate_track(const AudioClip& mixture, const ConditioningVector& z, Separator<T>& model) {
  if (mixture.empty()) throw Error("separate_track: empty mixture");
  const int rate = model.config().sample_rate;
  const AudioClip x = mixture.sample_rate == rate ? mixture : resample(mixture, rate);
  auto chunks = chunk(x, model.config().chunk_samples(), 0.5);
  for (auto& c : chunks) c.clip = model.separate_chunk(c.clip, z);
  AudioClip y = overlap_add(chunks, x.size());
  if (y.sample_rate != mixture.sample_rate) y = resample(y, mixture.sample_rate);
  y.samples.resize(mixture.size(), 0.0);
  return y;
}

namespace {
template <typename T>
void check_protocol(const Separator<T>& model, const EvalProtocol& p) {
  p.validate();
  const auto mode = model.config().mode;
  if (p.use_negatives && mode != ConditioningMode::kFewShotNeg)
    throw Error("negative conditioning needs a few-shot+neg checkpoint; this one is " + to_string(mode));
  if (!p.use_negatives && mode == ConditioningMode::kFewShotNeg)
    throw Error("a few-shot+neg checkpoint needs negative examples (enable negatives in the protocol)");
}
}  // namespace

template <typename T>
ConditioningVector draw_conditioning(const Corpus& corpus, std::size_t track_index, const std::string& target_class,
                                     Separator<T>& model, const EvalProtocol& protocol, std::mt19937_64& rng) {
  if (model.config().mode == ConditioningMode::kClass) return model.condition_on_class(target_class);
  const MultiTrack& track = corpus.at(track_index);
  ConditioningDraw draw;
  draw.n = protocol.n_shots;
  draw.chunk_len = static_cast<std::size_t>(std::llround(protocol.example_seconds * track.sample_rate()));
  draw.cross_track = protocol.source == ConditioningSource::kCrossTrack;
  draw.multi_source_prob = protocol.purity == ConditioningPurity::kMultiSource ? 1.0 : 0.0;
  draw.silence_dbfs = protocol.silence_dbfs;
  const auto pos = draw_positive_examples(corpus, track_index, target_class, draw, rng);
  std::vector<AudioClip> neg;
  if (protocol.use_negatives) {
    draw.multi_source_prob = 0.0;
    neg = draw_negative_examples(track, target_class, {}, draw, rng);
  }
  return model.condition_on_examples(pos, neg);
}

template <typename T>
TrackScore evaluate_track(const Corpus& corpus, std::size_t track_index, const std::string& target_class,
                          Separator<T>& model, const EvalProtocol& protocol) {
  check_protocol(model, protocol);
  const MultiTrack& track = corpus.at(track_index);
  const Stem* stem = track.find(target_class);
  if (!stem) throw Error("track '" + track.id + "' has no '" + target_class + "' stem");

  AudioClip mixture = track.mixture();
  AudioClip reference = stem->clip;
  const double p = peak(mixture.samples);
  if (protocol.normalize_peak > 0.0 && p > 0.0) {
    const double g = protocol.normalize_peak / p;
    for (auto& v : mixture.samples) v *= g;
    for (auto& v : reference.samples) v *= g;
  }

  TrackScore score;
  score.track_id = track.id;
  score.target_class = target_class;
  score.mixture_sdr = compute_sdr(mixture, reference).db;
  const bool fixed = model.config().mode == ConditioningMode::kClass;
  std::optional<SdrValue> fixed_value;
  for (int it = 0; it < protocol.iterations; ++it) {
    SdrValue v;
    if (fixed && fixed_value) {
      v = *fixed_value;
    } else {
      auto rng = iteration_rng(protocol, track.id, target_class, it);
      const ConditioningVector z = draw_conditioning(corpus, track_index, target_class, model, protocol, rng);
      v = compute_sdr(separate_track(mixture, z, model), reference);
      if (fixed) fixed_value = v;
    }
    score.sdr.push_back(v.db);
    score.capped.push_back(v.capped);
  }
  score.mean = mean(score.sdr);
  score.std = population_std(score.sdr);
  return score;
}

template <typename T>
EvalReport evaluate_corpus(const Corpus& corpus, const std::vector<std::string>& classes, Separator<T>& model,
                           const EvalProtocol& protocol) {
  check_protocol(model, protocol);
  if (corpus.empty()) throw Error("evaluate_corpus: empty corpus");
  std::vector<std::string> targets = classes;
  if (targets.empty()) {
    std::set<std::string> all;
    for (const auto& t : corpus)
      for (const auto& s : t.stems) all.insert(s.class_name);
    targets.assign(all.begin(), all.end());
  }

  EvalReport report;
  report.protocol = protocol;
  report.mode = to_string(model.config().mode);
  for (const auto& cls : targets) {
    const std::size_t first = report.tracks.size();
    for (std::size_t ti = 0; ti < corpus.size(); ++ti)
      if (corpus[ti].find(cls)) report.tracks.push_back(evaluate_track(corpus, ti, cls, model, protocol));
    ClassSummary s;
    s.target_class = cls;
    s.tracks = static_cast<int>(report.tracks.size() - first);
    if (s.tracks == 0) throw Error("no track in the corpus contains class '" + cls + "'");
    std::vector<double> means, stds, mix;
    std::vector<double> per_iter(static_cast<std::size_t>(protocol.iterations), 0.0);
    for (std::size_t i = first; i < report.tracks.size(); ++i) {
      const auto& t = report.tracks[i];
      means.push_back(t.mean);
      stds.push_back(t.std);
      mix.push_back(t.mixture_sdr);
      for (int it = 0; it < protocol.iterations; ++it) per_iter[it] += t.sdr[it] / s.tracks;
    }
    s.mean = mean(means);
    s.median = median(means);
    s.mean_track_std = mean(stds);
    s.std_of_iteration_means = population_std(per_iter);
    s.mixture_mean = mean(mix);
    report.classes.push_back(s);
  }
  return report;
}

void write_report_jsonl(const EvalReport& report, std::ostream& out) {
  using nlohmann::json;
  const auto& p = report.protocol;
  const json protocol = {{"n_shots", p.n_shots},         {"iterations", p.iterations},
                         {"source", to_string(p.source)}, {"purity", to_string(p.purity)},
                         {"use_negatives", p.use_negatives}, {"seed", p.seed}};
  for (const auto& t : report.tracks) {
    for (std::size_t i = 0; i < t.sdr.size(); ++i)
      out << json{{"type", "iteration"}, {"class", t.target_class}, {"track", t.track_id},
                  {"iteration", i},      {"sdr_db", t.sdr[i]},      {"capped", static_cast<bool>(t.capped[i])}}
                 .dump()
          << "\n";
    out << json{{"type", "track"}, {"class", t.target_class}, {"track", t.track_id},
                {"mean", t.mean},  {"std", t.std},            {"mixture_sdr", t.mixture_sdr}}
               .dump()
        << "\n";
  }
  for (const auto& c : report.classes)
    out << json{{"type", "summary"},
                {"mode", report.mode},
                {"protocol", protocol},
                {"class", c.target_class},
                {"tracks", c.tracks},
                {"mean", c.mean},
                {"median", c.median},
                {"mean_track_std", c.mean_track_std},
                {"std_of_iteration_means", c.std_of_iteration_means},
                {"mixture_mean", c.mixture_mean}}
               .dump()
        << "\n";
}

void print_summary(const EvalReport& report, std::ostream& out) {
  out << std::left << std::setw(14) << "class" << std::right << std::setw(8) << "tracks" << std::setw(10) << "mean"
      << std::setw(10) << "median" << std::setw(10) << "std" << std::setw(10) << "mixture" << "\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& c : report.classes)
    out << std::left << std::setw(14) << c.target_class << std::right << std::setw(8) << c.tracks << std::setw(10)
        << c.mean << std::setw(10) << c.median << std::setw(10) << c.mean_track_std << std::setw(10) << c.mixture_mean
        << "\n";
  out.unsetf(std::ios::floatfield);
}

#define FSMSS_EVAL_INSTANTIATE(T)                                                                              \
  template AudioClip separate_track<T>(const AudioClip&, const ConditioningVector&, Separator<T>&);            \
  template ConditioningVector draw_conditioning<T>(const Corpus&, std::size_t, const std::string&, Separator<T>&, \
                                                   const EvalProtocol&, std::mt19937_64&);                     \
  template TrackScore evaluate_track<T>(const Corpus&, std::size_t, const std::string&, Separator<T>&,          \
                                        const EvalProtocol&);                                                  \
  template EvalReport evaluate_corpus<T>(const Corpus&, const std::vector<std::string>&, Separator<T>&,         \
                                         const EvalProtocol&);

FSMSS_EVAL_INSTANTIATE(float)
FSMSS_EVAL_INSTANTIATE(double)

}  // namespace fsmss
