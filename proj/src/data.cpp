// SPDX-License-Identifier: Apache-2.0
#include "fsmss/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fsmss/dsp.hpp"

namespace fsmss {

namespace fs = std::filesystem;

// ------------------------------------------------------------ MultiTrack

AudioClip MultiTrack::mixture() const {
  AudioClip mix(length(), sample_rate());
  for (const auto& s : stems)
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += s.clip.samples[i];
  return mix;
}

const Stem* MultiTrack::find(const std::string& class_name) const {
  for (const auto& s : stems)
    if (s.class_name == class_name) return &s;
  return nullptr;
}

std::vector<std::string> MultiTrack::classes() const {
  std::vector<std::string> out;
  for (const auto& s : stems) out.push_back(s.class_name);
  return out;
}

void MultiTrack::validate() const {
  if (stems.empty()) throw Error("track '" + id + "' has no stems");
  std::set<std::string> seen;
  for (const auto& s : stems) {
    if (!seen.insert(s.class_name).second) throw Error("track '" + id + "' has two '" + s.class_name + "' stems");
    if (s.clip.size() != length() || s.clip.sample_rate != sample_rate())
      throw Error("track '" + id + "': stem '" + s.class_name + "' differs in length or sample rate");
  }
}

// ------------------------------------------------------------ sampling

void SamplerConfig::validate() const {
  if (min_shots < 1 || max_shots < min_shots) throw Error("sampler shots must satisfy 1 <= min_shots <= max_shots");
  if (chunk_seconds <= 0.0) throw Error("sampler.chunk_seconds must be positive");
  if (multi_source_prob < 0.0 || multi_source_prob > 1.0) throw Error("sampler.multi_source_prob must be in [0, 1]");
  if (max_retries < 1) throw Error("sampler.max_retries must be at least 1");
}

AudioClip slice(const AudioClip& clip, std::size_t offset, std::size_t len) {
  AudioClip out(len, clip.sample_rate);
  if (offset < clip.size()) {
    const std::size_t n = std::min(len, clip.size() - offset);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset), n, out.samples.begin());
  }
  return out;
}

bool is_silent(const AudioClip& clip, double silence_dbfs) { return rms_dbfs(clip.samples) < silence_dbfs; }

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Uniform over offsets o in [0, max_offset] with [o, o + len) disjoint from
// [excl, excl + excl_len).
bool draw_offset(std::mt19937_64& rng, std::size_t max_offset, std::size_t len, std::size_t excl,
                 std::size_t excl_len, std::size_t& out) {
  if (excl_len == 0) {
    out = std::uniform_int_distribution<std::size_t>(0, max_offset)(rng);
    return true;
  }
  const std::size_t before = excl >= len ? std::min(excl - len, max_offset) + 1 : 0;
  const std::size_t after_start = excl + excl_len;
  const std::size_t after = after_start <= max_offset ? max_offset - after_start + 1 : 0;
  if (before + after == 0) return false;
  const std::size_t r = std::uniform_int_distribution<std::size_t>(0, before + after - 1)(rng);
  out = r < before ? r : after_start + (r - before);
  return true;
}

std::vector<const Stem*> others(const MultiTrack& track, const std::string& class_name) {
  std::vector<const Stem*> out;
  for (const auto& s : track.stems)
    if (s.class_name != class_name) out.push_back(&s);
  return out;
}

// Returns an empty string on success, otherwise the reason for failure.
std::string try_draw_positive(const Corpus& corpus, std::size_t track_index, const std::string& class_name,
                              const ConditioningDraw& draw, std::mt19937_64& rng, std::vector<AudioClip>& out,
                              std::vector<ChunkSource>& sources) {
  const MultiTrack& home = corpus.at(track_index);
  std::vector<std::size_t> pool;
  if (draw.cross_track) {
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (i != track_index && corpus[i].find(class_name) && corpus[i].length() >= draw.chunk_len) pool.push_back(i);
    if (pool.empty()) return "cross-track conditioning needs another track containing '" + class_name + "'";
    std::shuffle(pool.begin(), pool.end(), rng);
  } else {
    if (!home.find(class_name)) return "track '" + home.id + "' has no '" + class_name + "' stem";
    pool.push_back(track_index);
  }

  out.clear();
  sources.clear();
  for (int i = 0; i < draw.n; ++i) {
    const MultiTrack& src = corpus[pool[static_cast<std::size_t>(i) % pool.size()]];
    if (src.length() < draw.chunk_len) return "track '" + src.id + "' is shorter than one chunk";
    const Stem& stem = *src.find(class_name);

    const Stem* extra = nullptr;
    if (draw.multi_source_prob > 0.0 && uniform01(rng) < draw.multi_source_prob) {
      auto cands = others(src, class_name);
      // Keep the target the only instrument shared by every example.
      if (draw.n > 1 && i == draw.n - 1 && !sources.empty()) {
        const std::string& first = sources.front().extra_class;
        const bool all_same = !first.empty() && std::all_of(sources.begin(), sources.end(), [&](const ChunkSource& s) {
          return s.extra_class == first;
        });
        if (all_same) std::erase_if(cands, [&](const Stem* s) { return s->class_name == first; });
      }
      if (!cands.empty()) extra = cands[uniform_index(rng, cands.size())];
    }

    const bool same_track = !draw.cross_track;
    const std::size_t max_offset = src.length() - draw.chunk_len;
    bool found = false;
    for (int attempt = 0; attempt < draw.max_retries && !found; ++attempt) {
      std::size_t offset = 0;
      if (!draw_offset(rng, max_offset, draw.chunk_len, same_track ? draw.exclude_offset : 0,
                       same_track ? draw.exclude_len : 0, offset))
        return "track '" + src.id + "' has no room for a conditioning chunk outside the target interval";
      AudioClip c = slice(stem.clip, offset, draw.chunk_len);
      if (is_silent(c, draw.silence_dbfs)) continue;
      if (extra) {
        const AudioClip e = slice(extra->clip, offset, draw.chunk_len);
        for (std::size_t k = 0; k < c.size(); ++k) c.samples[k] += e.samples[k];
      }
      out.push_back(std::move(c));
      sources.push_back({src.id, class_name, offset, extra ? extra->class_name : std::string()});
      found = true;
    }
    if (!found) return "no non-silent '" + class_name + "' chunk found in track '" + src.id + "'";
  }
  return {};
}

std::string try_draw_negative(const MultiTrack& track, const std::string& target_class,
                              const std::vector<std::string>& allowed, const ConditioningDraw& draw,
                              std::mt19937_64& rng, std::vector<AudioClip>& out, std::vector<ChunkSource>& sources) {
  std::vector<const Stem*> cands;
  for (const auto& s : track.stems)
    if (s.class_name != target_class &&
        (allowed.empty() || std::find(allowed.begin(), allowed.end(), s.class_name) != allowed.end()))
      cands.push_back(&s);
  if (cands.empty()) return "track '" + track.id + "' has no non-target instrument for negative examples";
  if (track.length() < draw.chunk_len) return "track '" + track.id + "' is shorter than one chunk";

  out.clear();
  sources.clear();
  const std::size_t max_offset = track.length() - draw.chunk_len;
  for (int i = 0; i < draw.n; ++i) {
    const Stem& stem = *cands[uniform_index(rng, cands.size())];
    bool found = false;
    for (int attempt = 0; attempt < draw.max_retries && !found; ++attempt) {
      std::size_t offset = 0;
      if (!draw_offset(rng, max_offset, draw.chunk_len, draw.exclude_offset, draw.exclude_len, offset))
        return "track '" + track.id + "' has no room for a negative chunk outside the target interval";
      AudioClip c = slice(stem.clip, offset, draw.chunk_len);
      if (is_silent(c, draw.silence_dbfs)) continue;
      out.push_back(std::move(c));
      sources.push_back({track.id, stem.class_name, offset, {}});
      found = true;
    }
    if (!found) return "no non-silent '" + stem.class_name + "' chunk found in track '" + track.id + "'";
  }
  return {};
}

}  // namespace

std::vector<AudioClip> draw_positive_examples(const Corpus& corpus, std::size_t track_index,
                                              const std::string& class_name, const ConditioningDraw& draw,
                                              std::mt19937_64& rng, std::vector<ChunkSource>* sources) {
  std::vector<AudioClip> out;
  std::vector<ChunkSource> src;
  if (const auto err = try_draw_positive(corpus, track_index, class_name, draw, rng, out, src); !err.empty())
    throw Error(err);
  if (sources) *sources = std::move(src);
  return out;
}

std::vector<AudioClip> draw_negative_examples(const MultiTrack& track, const std::string& target_class,
                                              const std::vector<std::string>& allowed, const ConditioningDraw& draw,
                                              std::mt19937_64& rng, std::vector<ChunkSource>* sources) {
  std::vector<AudioClip> out;
  std::vector<ChunkSource> src;
  if (const auto err = try_draw_negative(track, target_class, allowed, draw, rng, out, src); !err.empty())
    throw Error(err);
  if (sources) *sources = std::move(src);
  return out;
}

TrainingExample sample_training_example(const std::vector<WeightedCorpus>& corpora, const SamplerConfig& cfg,
                                        std::mt19937_64& rng) {
  cfg.validate();
  if (corpora.empty()) throw Error("sampler: no corpora");
  std::vector<double> weights;
  bool any_long = false;
  for (const auto& c : corpora) {
    if (!c.tracks || c.weight < 0.0) throw Error("sampler: invalid corpus entry");
    weights.push_back(c.tracks->empty() ? 0.0 : c.weight);
    for (const auto& t : *c.tracks) {
      const auto chunk = static_cast<std::size_t>(std::llround(cfg.chunk_seconds * t.sample_rate()));
      if (t.length() >= (cfg.cross_track ? chunk : 2 * chunk)) any_long = true;
    }
  }
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
    throw Error("sampler: every corpus is empty or has zero weight");
  if (!any_long)
    throw Error("sampler: no track is long enough for a target chunk plus non-overlapping conditioning chunks");
  std::discrete_distribution<std::size_t> pick_corpus(weights.begin(), weights.end());

  std::string last_reason = "no eligible target stem";
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const Corpus& corpus = *corpora[pick_corpus(rng)].tracks;
    const std::size_t ti = uniform_index(rng, corpus.size());
    const MultiTrack& track = corpus[ti];
    const auto chunk = static_cast<std::size_t>(std::llround(cfg.chunk_seconds * track.sample_rate()));
    if (track.length() < chunk) {
      last_reason = "track '" + track.id + "' is shorter than one chunk";
      continue;
    }
    const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, track.length() - chunk)(rng);

    std::vector<const Stem*> targets;
    std::vector<std::string> sounding;
    for (const auto& s : track.stems) {
      if (is_silent(slice(s.clip, offset, chunk), cfg.silence_dbfs)) continue;
      sounding.push_back(s.class_name);
      if (std::find(cfg.holdout.begin(), cfg.holdout.end(), s.class_name) == cfg.holdout.end())
        targets.push_back(&s);
    }
    if (targets.empty()) {
      last_reason = "no non-silent, non-held-out target stem";
      continue;
    }
    const Stem& target = *targets[uniform_index(rng, targets.size())];
    const int n = std::uniform_int_distribution<int>(cfg.min_shots, cfg.max_shots)(rng);

    ConditioningDraw draw;
    draw.n = n;
    draw.chunk_len = chunk;
    draw.cross_track = cfg.cross_track;
    draw.multi_source_prob = cfg.multi_source_prob;
    draw.silence_dbfs = cfg.silence_dbfs;
    draw.max_retries = cfg.max_retries;
    draw.exclude_offset = offset;
    draw.exclude_len = chunk;

    TrainingExample ex;
    if (auto err = try_draw_positive(corpus, ti, target.class_name, draw, rng, ex.positives, ex.positive_sources);
        !err.empty()) {
      last_reason = err;
      continue;
    }
    if (cfg.use_negatives) {
      std::vector<std::string> allowed;
      for (const auto& c : sounding)
        if (c != target.class_name) allowed.push_back(c);
      if (allowed.empty()) {
        last_reason = "no other instrument sounds in the mixture chunk";
        continue;
      }
      draw.multi_source_prob = 0.0;
      if (auto err = try_draw_negative(track, target.class_name, allowed, draw, rng, ex.negatives,
                                       ex.negative_sources);
          !err.empty()) {
        last_reason = err;
        continue;
      }
    }
    ex.mixture = AudioClip(chunk, track.sample_rate());
    for (const auto& s : track.stems) {
      const AudioClip part = slice(s.clip, offset, chunk);
      for (std::size_t k = 0; k < chunk; ++k) ex.mixture.samples[k] += part.samples[k];
    }
    ex.target = slice(target.clip, offset, chunk);
    ex.target_class = target.class_name;
    ex.track_id = track.id;
    ex.offset = offset;
    return ex;
  }
  throw Error("sampler: no valid training example after " + std::to_string(cfg.max_retries) +
              " attempts (last: " + last_reason + ")");
}

TrainingExample sample_training_example(const Corpus& corpus, const SamplerConfig& cfg, std::mt19937_64& rng) {
  return sample_training_example(std::vector<WeightedCorpus>{{&corpus, 1.0}}, cfg, rng);
}

// ------------------------------------------------------------ synthesis

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::kHarmonic: return "harmonic";
    case Archetype::kPluck: return "pluck";
    case Archetype::kNoise: return "noise";
  }
  return "?";
}

Archetype archetype_from_string(const std::string& s) {
  if (s == "harmonic") return Archetype::kHarmonic;
  if (s == "pluck") return Archetype::kPluck;
  if (s == "noise") return Archetype::kNoise;
  throw Error("unknown synth archetype '" + s + "' (expected harmonic, pluck or noise)");
}

namespace {

SynthClass bass_class() {
  SynthClass c;
  c.name = "bass";
  c.archetype = Archetype::kPluck;
  c.freq_lo = 41.0;
  c.freq_hi = 110.0;
  c.harmonics = 6;
  c.rolloff_lo = 1.2;
  c.rolloff_hi = 2.0;
  c.decay_lo = 0.3;
  c.decay_hi = 0.7;
  c.note_rate = 2.5;
  return c;
}

SynthClass synth_class() {
  SynthClass c;
  c.name = "synthesizer";
  c.archetype = Archetype::kHarmonic;
  c.freq_lo = 262.0;
  c.freq_hi = 523.0;
  c.harmonics = 10;
  c.rolloff_lo = 0.8;
  c.rolloff_hi = 1.3;
  c.decay_lo = 0.6;
  c.decay_hi = 0.9;
  c.note_rate = 2.0;
  return c;
}

SynthClass drums_class() {
  SynthClass c;
  c.name = "drums";
  c.archetype = Archetype::kNoise;
  c.freq_lo = 5000.0;
  c.freq_hi = 8000.0;
  c.decay_lo = 0.04;
  c.decay_hi = 0.1;
  c.note_rate = 4.0;
  c.q = 1.5;
  return c;
}

SynthClass guitar_class() {
  SynthClass c;
  c.name = "guitar";
  c.archetype = Archetype::kPluck;
  c.freq_lo = 131.0;
  c.freq_hi = 247.0;
  c.harmonics = 8;
  c.rolloff_lo = 0.9;
  c.rolloff_hi = 1.4;
  c.decay_lo = 0.2;
  c.decay_hi = 0.5;
  c.note_rate = 3.0;
  return c;
}

SynthClass percussion_class() {
  SynthClass c;
  c.name = "percussion";
  c.archetype = Archetype::kNoise;
  c.freq_lo = 2500.0;
  c.freq_hi = 3500.0;
  c.decay_lo = 0.05;
  c.decay_hi = 0.12;
  c.note_rate = 3.0;
  c.q = 2.5;
  return c;
}

SynthClass pitched(std::string name, Archetype archetype, double lo, double hi, int harmonics, double rolloff_lo,
                   double rolloff_hi, double decay_lo, double decay_hi, double note_rate) {
  SynthClass c;
  c.name = std::move(name);
  c.archetype = archetype;
  c.freq_lo = lo;
  c.freq_hi = hi;
  c.harmonics = harmonics;
  c.rolloff_lo = rolloff_lo;
  c.rolloff_hi = rolloff_hi;
  c.decay_lo = decay_lo;
  c.decay_hi = decay_hi;
  c.note_rate = note_rate;
  return c;
}

struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad bandpass(double fc, double q, int sample_rate) {
    const double w0 = 2.0 * std::numbers::pi * fc / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
  }
  double operator()(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

std::vector<double> onsets(std::mt19937_64& rng, double rate, double seconds) {
  std::vector<double> out;
  double t = uniform(rng, 0.0, 0.5 / rate);
  while (t < seconds) {
    out.push_back(t);
    t += uniform(rng, 0.5, 1.5) / rate;
  }
  return out;
}

}  // namespace

SynthSpec SynthSpec::three_class() {
  SynthSpec s;
  s.classes = {bass_class(), synth_class(), drums_class()};
  s.min_stems = 3;
  s.max_stems = 3;
  return s;
}

SynthSpec SynthSpec::five_class() {
  SynthSpec s;
  s.classes = {bass_class(), guitar_class(), synth_class(), percussion_class(), drums_class()};
  s.max_stems = 5;
  s.class_gap_hz = 150.0;
  return s;
}

SynthSpec SynthSpec::eight_class() {
  SynthSpec s;
  s.classes = {bass_class(),
               pitched("strings", Archetype::kHarmonic, 110.0, 147.0, 6, 1.4, 2.0, 0.6, 1.0, 1.5),
               pitched("guitar", Archetype::kPluck, 185.0, 247.0, 6, 1.3, 1.8, 0.2, 0.5, 3.0),
               pitched("piano", Archetype::kPluck, 392.0, 523.0, 5, 1.5, 2.0, 0.3, 0.8, 3.0),
               synth_class(),
               pitched("woodwinds", Archetype::kHarmonic, 1175.0, 1568.0, 4, 1.6, 2.2, 0.4, 0.8, 2.5),
               percussion_class(),
               drums_class()};
  s.min_stems = 3;
  s.max_stems = 5;
  s.class_gap_hz = 25.0;
  return s;
}

void SynthSpec::validate() const {
  if (classes.empty()) throw Error("synth: no classes");
  std::set<std::string> names;
  for (const auto& c : classes) {
    if (c.name.empty() || !names.insert(c.name).second) throw Error("synth: class names must be unique and non-empty");
    if (!(c.freq_lo > 0.0 && c.freq_hi >= c.freq_lo && c.freq_hi < sample_rate / 2.0))
      throw Error("synth: class '" + c.name + "' frequency range must lie in (0, Nyquist)");
    if (c.harmonics < 1 || c.note_rate <= 0.0 || c.decay_lo <= 0.0 || c.decay_hi < c.decay_lo ||
        c.rolloff_hi < c.rolloff_lo || c.q <= 0.0)
      throw Error("synth: class '" + c.name + "' has invalid timbre parameters");
  }
  if (tracks < 1 || track_seconds <= 0.0 || sample_rate <= 0) throw Error("synth: invalid track layout");
  if (min_stems < 1 || max_stems < min_stems) throw Error("synth: need 1 <= min_stems <= max_stems");
  if (min_stems > static_cast<int>(classes.size()))
    throw Error("synth: min_stems exceeds the number of classes");
  if (mixture_peak <= 0.0 || mixture_peak > 1.0) throw Error("synth: mixture_peak must be in (0, 1]");
  if (level_jitter_db < 0.0) throw Error("synth: level_jitter_db must be non-negative");
}

AudioClip synthesize_stem(const SynthClass& cls, std::size_t length, int sample_rate, std::mt19937_64& rng) {
  AudioClip out(length, sample_rate);
  const double sr = sample_rate;
  const double seconds = static_cast<double>(length) / sr;
  const double rolloff = uniform(rng, cls.rolloff_lo, cls.rolloff_hi);
  const double decay = uniform(rng, cls.decay_lo, cls.decay_hi);
  // Per-track register: a sub-range covering half the class range (log scale).
  const double span = std::log(cls.freq_hi / cls.freq_lo);
  const double lo = cls.freq_lo * std::exp(uniform(rng, 0.0, 0.5 * span));
  const double hi = lo * std::exp(0.5 * span);

  const auto times = onsets(rng, cls.note_rate, seconds);
  for (std::size_t e = 0; e < times.size(); ++e) {
    const double next = e + 1 < times.size() ? times[e + 1] : seconds;
    const auto start = static_cast<std::size_t>(times[e] * sr);
    const double gain = uniform(rng, 0.6, 1.0);
    switch (cls.archetype) {
      case Archetype::kHarmonic:
      case Archetype::kPluck: {
        const double f0 = log_uniform(rng, lo, hi);
        const bool pluck = cls.archetype == Archetype::kPluck;
        const double dur = pluck ? std::min(next - times[e], 5.0 * decay) : (next - times[e]) * decay;
        const auto n = static_cast<std::size_t>(dur * sr);
        std::vector<double> phase(static_cast<std::size_t>(cls.harmonics));
        for (auto& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < n && start + i < length; ++i) {
          const double t = static_cast<double>(i) / sr;
          const double edge = std::min({1.0, t / 0.005, (dur - t) / (pluck ? 0.005 : 0.03)});
          double v = 0.0;
          for (int k = 1; k <= cls.harmonics; ++k) {
            const double f = k * f0;
            if (f >= 0.45 * sr) break;
            double a = std::pow(static_cast<double>(k), -rolloff);
            if (pluck) a *= std::exp(-t * (1.0 + 0.3 * (k - 1)) / decay);
            v += a * std::sin(2.0 * std::numbers::pi * f * t + phase[static_cast<std::size_t>(k - 1)]);
          }
          out.samples[start + i] += gain * std::max(edge, 0.0) * v;
        }
        break;
      }
      case Archetype::kNoise: {
        const double fc = log_uniform(rng, lo, hi);
        Biquad f1 = Biquad::bandpass(fc, cls.q, sample_rate), f2 = f1;
        std::normal_distribution<double> noise(0.0, 1.0);
        const double dur = std::min(next - times[e], 6.0 * decay);
        const auto n = static_cast<std::size_t>(dur * sr);
        for (std::size_t i = 0; i < n && start + i < length; ++i) {
          const double t = static_cast<double>(i) / sr;
          const double env = std::min(1.0, t / 0.001) * std::exp(-t / decay) * std::min(1.0, (dur - t) / 0.005);
          out.samples[start + i] += gain * env * f2(f1(noise(rng)));
        }
        break;
      }
    }
  }
  return out;
}

Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  const auto length = static_cast<std::size_t>(std::llround(spec.track_seconds * spec.sample_rate));
  const int max_stems = std::min<int>(spec.max_stems, static_cast<int>(spec.classes.size()));
  Corpus corpus;
  for (int ti = 0; ti < spec.tracks; ++ti) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(ti)};
    std::mt19937_64 rng(seq);
    const int k = std::uniform_int_distribution<int>(spec.min_stems, max_stems)(rng);
    std::vector<std::size_t> order(spec.classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());

    MultiTrack track;
    char id[32];
    std::snprintf(id, sizeof id, "track%03d", ti);
    track.id = id;
    for (std::size_t ci : order) {
      AudioClip clip = synthesize_stem(spec.classes[ci], length, spec.sample_rate, rng);
      const double r = rms(clip.samples);
      const double level = std::pow(10.0, uniform(rng, -spec.level_jitter_db, spec.level_jitter_db) / 20.0);
      if (r > 0.0)
        for (auto& v : clip.samples) v *= level / r;
      track.stems.push_back({spec.classes[ci].name, std::move(clip)});
    }
    const double p = peak(track.mixture().samples);
    if (p > 0.0)
      for (auto& s : track.stems)
        for (auto& v : s.clip.samples) v *= spec.mixture_peak / p;
    corpus.push_back(std::move(track));
  }
  return corpus;
}

double spectral_centroid(const AudioClip& clip) {
  const auto spec = stft(clip, StftConfig{});
  double num = 0.0, den = 0.0;
  for (int k = 0; k < spec.bins; ++k) {
    const double f = static_cast<double>(k) * clip.sample_rate / spec.config.fft_size;
    for (int t = 0; t < spec.frames; ++t) {
      const double m = std::abs(spec.at(k, t));
      num += f * m;
      den += m;
    }
  }
  if (den == 0.0) throw Error("spectral_centroid: silent clip");
  return num / den;
}

// ------------------------------------------------------------ files

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

StemMapping StemMapping::identity(const std::vector<std::string>& names) {
  std::map<std::string, std::string> t;
  for (const auto& n : names) t[n] = n;
  return StemMapping(std::move(t));
}

StemMapping StemMapping::from_text(const std::string& text) {
  std::map<std::string, std::string> t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("mapping line " + std::to_string(lineno) + ": expected 'stem = class'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw Error("mapping line " + std::to_string(lineno) + ": empty name");
    t[key] = value;
  }
  return StemMapping(std::move(t));
}

StemMapping StemMapping::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mapping file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

const std::string& StemMapping::lookup(const std::string& file_stem) const {
  const auto it = table_.find(file_stem);
  if (it == table_.end()) throw Error("no class mapping for stem '" + file_stem + "'; mapping table: " + describe());
  return it->second;
}

std::string StemMapping::describe() const {
  std::string s;
  for (const auto& [k, v] : table_) {
    if (!s.empty()) s += ", ";
    s += k + " -> " + v;
  }
  return s.empty() ? "(empty)" : s;
}

MultiTrack load_multitrack_dir(const fs::path& dir, const StemMapping& mapping, int sample_rate) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  MultiTrack track;
  track.id = dir.filename().string();
  for (const auto& f : files) {
    const std::string& cls = mapping.lookup(f.stem().string());
    if (cls == "-") continue;
    if (track.find(cls)) throw Error("track '" + track.id + "' maps two files to class '" + cls + "'");
    AudioClip clip = read_wav_mono(f);
    if (clip.sample_rate != sample_rate) clip = resample(clip, sample_rate);
    if (!track.stems.empty() && clip.size() != track.length())
      throw Error("track '" + track.id + "': stem " + f.filename().string() + " has " + std::to_string(clip.size()) +
                  " samples, expected " + std::to_string(track.length()));
    track.stems.push_back({cls, std::move(clip)});
  }
  if (track.stems.empty()) throw Error("no mapped WAV stems in " + dir.string());
  return track;
}

Corpus load_corpus_dir(const fs::path& dir, const StemMapping& mapping, int sample_rate) {
  if (!fs::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  Corpus corpus;
  for (const auto& d : dirs) corpus.push_back(load_multitrack_dir(d, mapping, sample_rate));
  if (corpus.empty()) throw Error("corpus directory has no track folders: " + dir.string());
  return corpus;
}

void write_corpus_dir(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest;
  nlohmann::json tracks = nlohmann::json::array();
  std::map<std::string, int> counts;
  for (const auto& t : corpus) {
    t.validate();
    const fs::path td = dir / t.id;
    fs::create_directories(td, ec);
    if (ec) throw Error("cannot create " + td.string() + ": " + ec.message());
    for (const auto& s : t.stems) {
      write_wav(td / (s.class_name + ".wav"), s.clip, WavEncoding::kFloat32);
      ++counts[s.class_name];
    }
    tracks.push_back({{"id", t.id}, {"classes", t.classes()}, {"samples", t.length()}});
  }
  manifest["sample_rate"] = corpus.empty() ? 0 : corpus.front().sample_rate();
  manifest["tracks"] = tracks;
  manifest["class_counts"] = counts;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw Error("split fraction must be in [0, 1)");
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(corpus.size())));
  if (fraction > 0.0 && corpus.size() > 1) k = std::clamp<std::size_t>(k, 1, corpus.size() - 1);
  std::vector<bool> second(corpus.size(), false);
  for (std::size_t i = corpus.size() - k; i < corpus.size(); ++i) second[idx[i]] = true;
  std::pair<Corpus, Corpus> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) (second[i] ? out.second : out.first).push_back(corpus[i]);
  return out;
}

}  // namespace fsmss
