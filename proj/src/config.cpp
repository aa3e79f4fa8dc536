// SPDX-License-Identifier: Apache-2.0
#include "fsmss/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fsmss {

using nlohmann::json;

namespace {

class Fields {
 public:
  Fields(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw Error("config section '" + name() + "' must be a JSON object");
  }

  template <typename V>
  Fields& operator()(const char* key, V& out) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<V>();
      } catch (const json::exception& e) {
        throw Error("config key '" + path(key) + "': " + e.what());
      }
    }
    return *this;
  }

  template <typename V, typename Parse>
  Fields& parsed(const char* key, V& out, Parse parse) {
    std::string s;
    (*this)(key, s);
    if (j_.contains(key)) out = parse(s);
    return *this;
  }

  template <typename V, typename Read>
  Fields& section(const char* key, V& out, Read read) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) read(*it, out, path(key));
    return *this;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error("unknown config key '" + path(k) + "'");
  }

 private:
  std::string name() const { return section_.empty() ? "<root>" : section_; }
  std::string path(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

void read(const json& j, StftConfig& c, const std::string& s) {
  Fields(j, s)("fft_size", c.fft_size)("hop", c.hop).parsed("window", c.window, window_from_string)(
      "centered", c.centered).finish();
}

void read(const json& j, UNetConfig& c, const std::string& s) {
  Fields(j, s)("depth", c.depth)("base_channels", c.base_channels)("kernel", c.kernel)("stride", c.stride)(
      "leaky_slope", c.leaky_slope)("in_freq", c.in_freq)("in_frames", c.in_frames)("in_channels", c.in_channels)(
      "bn_momentum", c.bn_momentum).finish();
}

void read(const json& j, EncoderConfig& c, const std::string& s) {
  Fields(j, s)("blocks", c.blocks)("filters", c.filters)("kernel", c.kernel)("input_bands", c.input_bands)(
      "fmin", c.fmin)("fmax", c.fmax)("min_seconds", c.min_seconds)("bn_momentum", c.bn_momentum).finish();
}

void read(const json& j, LossConfig& c, const std::string& s) {
  Fields(j, s)("sdr_epsilon", c.sdr_epsilon)
      .parsed("sdr_form", c.sdr_form, sdr_form_from_string)("sdr_db_floor", c.sdr_db_floor)("w_sdr", c.w_sdr)(
          "w_mae", c.w_mae)("silent_energy", c.silent_energy)
      .finish();
}

void read(const json& j, SamplerConfig& c, const std::string& s) {
  Fields(j, s)("min_shots", c.min_shots)("max_shots", c.max_shots)("chunk_seconds", c.chunk_seconds)(
      "multi_source_prob", c.multi_source_prob)("cross_track", c.cross_track)("use_negatives", c.use_negatives)(
      "holdout", c.holdout)("silence_dbfs", c.silence_dbfs)("max_retries", c.max_retries)("rng_seed", c.rng_seed)
      .finish();
}

void read(const json& j, SynthClass& c, const std::string& s) {
  Fields(j, s)("name", c.name).parsed("archetype", c.archetype, archetype_from_string)("freq_lo", c.freq_lo)(
      "freq_hi", c.freq_hi)("harmonics", c.harmonics)("rolloff_lo", c.rolloff_lo)("rolloff_hi", c.rolloff_hi)(
      "decay_lo", c.decay_lo)("decay_hi", c.decay_hi)("note_rate", c.note_rate)("q", c.q).finish();
}

void read(const json& j, SynthSpec& c, const std::string& s) {
  Fields f(j, s);
  f.section("classes", c.classes, [](const json& arr, std::vector<SynthClass>& out, const std::string& p) {
    if (!arr.is_array()) throw Error("config key '" + p + "' must be an array");
    out.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      SynthClass sc;
      read(arr[i], sc, p + "[" + std::to_string(i) + "]");
      out.push_back(sc);
    }
  });
  f("tracks", c.tracks)("track_seconds", c.track_seconds)("sample_rate", c.sample_rate)("min_stems", c.min_stems)(
      "max_stems", c.max_stems)("level_jitter_db", c.level_jitter_db)("mixture_peak", c.mixture_peak)(
      "class_gap_hz", c.class_gap_hz)("seed", c.seed).finish();
}

void read(const json& j, EvalProtocol& c, const std::string& s) {
  Fields(j, s)("n_shots", c.n_shots)("iterations", c.iterations)
      .parsed("source", c.source, conditioning_source_from_string)
      .parsed("purity", c.purity, conditioning_purity_from_string)("use_negatives", c.use_negatives)("seed", c.seed)(
          "example_seconds", c.example_seconds)("normalize_peak", c.normalize_peak)("silence_dbfs", c.silence_dbfs)
      .finish();
}

void read(const json& j, AdamConfig& c, const std::string& s) {
  Fields(j, s)("learning_rate", c.learning_rate)("beta1", c.beta1)("beta2", c.beta2)("epsilon", c.epsilon).finish();
}

void read(const json& j, TrainingConfig& c, const std::string& s) {
  Fields(j, s)
      .parsed("mode", c.mode, conditioning_mode_from_string)("batch_size", c.batch_size)
      .section("adam", c.adam, [](const json& jj, AdamConfig& a, const std::string& p) { read(jj, a, p); })(
          "max_steps", c.max_steps)("validate_every", c.validate_every)("patience", c.patience)(
          "validation_fraction", c.validation_fraction)("validation_batches", c.validation_batches)(
          "bn_calibration_batches", c.bn_calibration_batches)("log_every", c.log_every)
      .finish();
}

void read(const json& j, PathsConfig& c, const std::string& s) {
  Fields(j, s)("corpus_dir", c.corpus_dir)("out_dir", c.out_dir)("mapping_file", c.mapping_file).finish();
}

void read(const json& j, InstrumentVocabulary& v, const std::string& s) {
  if (!j.is_array()) throw Error("config key '" + s + "' must be an array of class names");
  v = InstrumentVocabulary(j.get<std::vector<std::string>>());
}

template <typename V>
auto reader() {
  return [](const json& j, V& out, const std::string& p) { read(j, out, p); };
}

void read(const json& j, SeparatorConfig& c, const std::string& s) {
  Fields(j, s)
      .parsed("mode", c.mode, conditioning_mode_from_string)
      .section("unet", c.unet, reader<UNetConfig>())
      .section("encoder", c.encoder, reader<EncoderConfig>())
      .section("stft", c.stft, reader<StftConfig>())
      .section("vocabulary", c.vocabulary, reader<InstrumentVocabulary>())("sample_rate", c.sample_rate)(
          "chunk_seconds", c.chunk_seconds)
      .finish();
}

void read(const json& j, RunConfig& c, const std::string& s) {
  Fields(j, s)("sample_rate", c.sample_rate)("chunk_seconds", c.chunk_seconds)
      .section("vocabulary", c.vocabulary, reader<InstrumentVocabulary>())
      .section("stft", c.stft, reader<StftConfig>())
      .section("unet", c.unet, reader<UNetConfig>())
      .section("encoder", c.encoder, reader<EncoderConfig>())
      .section("loss", c.loss, reader<LossConfig>())
      .section("sampler", c.sampler, reader<SamplerConfig>())
      .section("training", c.training, reader<TrainingConfig>())
      .section("eval", c.eval, reader<EvalProtocol>())
      .section("synth", c.synth, reader<SynthSpec>())
      .section("paths", c.paths, reader<PathsConfig>())("seed", c.seed)
      .finish();
}

}  // namespace

void to_json(json& j, const StftConfig& c) {
  j = {{"fft_size", c.fft_size}, {"hop", c.hop}, {"window", to_string(c.window)}, {"centered", c.centered}};
}
void from_json(const json& j, StftConfig& c) { read(j, c, "stft"); }

void to_json(json& j, const UNetConfig& c) {
  j = {{"depth", c.depth},         {"base_channels", c.base_channels}, {"kernel", c.kernel},
       {"stride", c.stride},       {"leaky_slope", c.leaky_slope},     {"in_freq", c.in_freq},
       {"in_frames", c.in_frames}, {"in_channels", c.in_channels},     {"bn_momentum", c.bn_momentum}};
}
void from_json(const json& j, UNetConfig& c) { read(j, c, "unet"); }

void to_json(json& j, const EncoderConfig& c) {
  j = {{"blocks", c.blocks}, {"filters", c.filters}, {"kernel", c.kernel},           {"input_bands", c.input_bands},
       {"fmin", c.fmin},     {"fmax", c.fmax},       {"min_seconds", c.min_seconds}, {"bn_momentum", c.bn_momentum}};
}
void from_json(const json& j, EncoderConfig& c) { read(j, c, "encoder"); }

void to_json(json& j, const LossConfig& c) {
  j = {{"sdr_epsilon", c.sdr_epsilon}, {"sdr_form", to_string(c.sdr_form)}, {"sdr_db_floor", c.sdr_db_floor},
       {"w_sdr", c.w_sdr},           {"w_mae", c.w_mae},                   {"silent_energy", c.silent_energy}};
}
void from_json(const json& j, LossConfig& c) { read(j, c, "loss"); }

void to_json(json& j, const SamplerConfig& c) {
  j = {{"min_shots", c.min_shots},
       {"max_shots", c.max_shots},
       {"chunk_seconds", c.chunk_seconds},
       {"multi_source_prob", c.multi_source_prob},
       {"cross_track", c.cross_track},
       {"use_negatives", c.use_negatives},
       {"holdout", c.holdout},
       {"silence_dbfs", c.silence_dbfs},
       {"max_retries", c.max_retries},
       {"rng_seed", c.rng_seed}};
}
void from_json(const json& j, SamplerConfig& c) { read(j, c, "sampler"); }

void to_json(json& j, const SynthClass& c) {
  j = {{"name", c.name},         {"archetype", to_string(c.archetype)},
       {"freq_lo", c.freq_lo},   {"freq_hi", c.freq_hi},
       {"harmonics", c.harmonics}, {"rolloff_lo", c.rolloff_lo},
       {"rolloff_hi", c.rolloff_hi}, {"decay_lo", c.decay_lo},
       {"decay_hi", c.decay_hi}, {"note_rate", c.note_rate},
       {"q", c.q}};
}
void from_json(const json& j, SynthClass& c) { read(j, c, "synth.class"); }

void to_json(json& j, const SynthSpec& c) {
  j = {{"classes", c.classes},     {"tracks", c.tracks},
       {"track_seconds", c.track_seconds}, {"sample_rate", c.sample_rate},
       {"min_stems", c.min_stems}, {"max_stems", c.max_stems},
       {"level_jitter_db", c.level_jitter_db}, {"mixture_peak", c.mixture_peak},
       {"class_gap_hz", c.class_gap_hz}, {"seed", c.seed}};
}
void from_json(const json& j, SynthSpec& c) { read(j, c, "synth"); }

void to_json(json& j, const EvalProtocol& c) {
  j = {{"n_shots", c.n_shots},
       {"iterations", c.iterations},
       {"source", to_string(c.source)},
       {"purity", to_string(c.purity)},
       {"use_negatives", c.use_negatives},
       {"seed", c.seed},
       {"example_seconds", c.example_seconds},
       {"normalize_peak", c.normalize_peak},
       {"silence_dbfs", c.silence_dbfs}};
}
void from_json(const json& j, EvalProtocol& c) { read(j, c, "eval"); }

void to_json(json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}
void from_json(const json& j, AdamConfig& c) { read(j, c, "adam"); }

void to_json(json& j, const TrainingConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"batch_size", c.batch_size},
       {"adam", c.adam},
       {"max_steps", c.max_steps},
       {"validate_every", c.validate_every},
       {"patience", c.patience},
       {"validation_fraction", c.validation_fraction},
       {"validation_batches", c.validation_batches},
       {"bn_calibration_batches", c.bn_calibration_batches},
       {"log_every", c.log_every}};
}
void from_json(const json& j, TrainingConfig& c) { read(j, c, "training"); }

void to_json(json& j, const PathsConfig& c) {
  j = {{"corpus_dir", c.corpus_dir}, {"out_dir", c.out_dir}, {"mapping_file", c.mapping_file}};
}
void from_json(const json& j, PathsConfig& c) { read(j, c, "paths"); }

void to_json(json& j, const SeparatorConfig& c) {
  j = {{"mode", to_string(c.mode)},          {"unet", c.unet},
       {"encoder", c.encoder},               {"stft", c.stft},
       {"vocabulary", c.vocabulary.names()}, {"sample_rate", c.sample_rate},
       {"chunk_seconds", c.chunk_seconds}};
}
void from_json(const json& j, SeparatorConfig& c) { read(j, c, "model"); }

void to_json(json& j, const RunConfig& c) {
  j = {{"sample_rate", c.sample_rate},
       {"chunk_seconds", c.chunk_seconds},
       {"vocabulary", c.vocabulary.names()},
       {"stft", c.stft},
       {"unet", c.unet},
       {"encoder", c.encoder},
       {"loss", c.loss},
       {"sampler", c.sampler},
       {"training", c.training},
       {"eval", c.eval},
       {"synth", c.synth},
       {"paths", c.paths},
       {"seed", c.seed}};
}
void from_json(const json& j, RunConfig& c) { read(j, c, ""); }

void TrainingConfig::validate() const {
  if (batch_size < 1) throw Error("training.batch_size must be at least 1");
  if (adam.learning_rate <= 0.0) throw Error("training.adam.learning_rate must be positive");
  if (max_steps < 0) throw Error("training.max_steps must be non-negative");
  if (validate_every < 1 || patience < 1 || validation_batches < 1 || bn_calibration_batches < 1 || log_every < 1)
    throw Error("training cadence values must be at least 1");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw Error("training.validation_fraction must be in (0, 1)");
}

SeparatorConfig RunConfig::separator() const {
  SeparatorConfig s;
  s.mode = training.mode;
  s.unet = unet;
  s.encoder = encoder;
  s.stft = stft;
  s.vocabulary = vocabulary;
  s.sample_rate = sample_rate;
  s.chunk_seconds = chunk_seconds;
  return s;
}

void RunConfig::validate() const {
  separator().validate();
  sampler.validate();
  training.validate();
  if (!(loss.sdr_epsilon > 0.0) || !(loss.sdr_db_floor > 0.0) || loss.w_sdr < 0.0 || loss.w_mae < 0.0)
    throw Error("loss: sdr_epsilon and sdr_db_floor must be positive and weights non-negative");
  eval.validate();
  synth.validate();
  for (const auto& c : synth.classes)
    if (!vocabulary.contains(c.name))
      throw Error("synth class '" + c.name + "' is not in the vocabulary: " + vocabulary.joined());
}

RunConfig RunConfig::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  read(j, c, "");
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string RunConfig::dump() const { return json(*this).dump(2); }

}  // namespace fsmss
