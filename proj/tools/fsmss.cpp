// SPDX-License-Identifier: Apache-2.0
// Command-line front end: synth, train, separate, evaluate.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fsmss/checkpoint.hpp"
#include "fsmss/config.hpp"
#include "fsmss/eval.hpp"
#include "fsmss/train.hpp"

namespace fs = std::filesystem;
using namespace fsmss;

namespace {

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

StemMapping mapping_for(const std::string& file, const InstrumentVocabulary& vocab) {
  return file.empty() ? StemMapping::identity(vocab.names()) : StemMapping::load(file);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct SynthArgs {
  std::string config, out;
  int tracks = 0;
  long long seed = -1;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (a.tracks > 0) cfg.synth.tracks = a.tracks;
  if (a.seed >= 0) cfg.synth.seed = static_cast<std::uint64_t>(a.seed);
  cfg.synth.validate();
  const fs::path out = a.out.empty() ? fs::path(cfg.paths.corpus_dir) : fs::path(a.out);
  const Corpus corpus = generate_synthetic_corpus(cfg.synth);
  write_corpus_dir(corpus, out);
  std::cout << "wrote " << corpus.size() << " tracks to " << out.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, corpus, out, mode, holdout, resume;
  double multi_source = -1.0;
  long max_steps = -1;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (!a.corpus.empty()) cfg.paths.corpus_dir = a.corpus;
  if (!a.out.empty()) cfg.paths.out_dir = a.out;
  if (!a.mode.empty()) cfg.training.mode = conditioning_mode_from_string(a.mode);
  if (!a.holdout.empty()) cfg.sampler.holdout = split_list(a.holdout);
  if (a.multi_source >= 0.0) cfg.sampler.multi_source_prob = a.multi_source;
  if (a.max_steps >= 0) cfg.training.max_steps = a.max_steps;
  cfg.validate();

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    if (!(resume->config == cfg.separator()))
      throw Error("checkpoint " + a.resume + " was trained with a different model configuration");
  }

  const Corpus corpus = load_corpus_dir(cfg.paths.corpus_dir, mapping_for(cfg.paths.mapping_file, cfg.vocabulary),
                                        cfg.sample_rate);
  auto [train, validation] = split_corpus(corpus, cfg.training.validation_fraction, cfg.seed);
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  {
    std::ofstream c(out / "config.json");
    c << cfg.dump() << "\n";
  }
  std::cout << "training " << to_string(cfg.training.mode) << " model on " << train.size() << " tracks ("
            << validation.size() << " validation)\n";

  Trainer trainer(cfg.separator(), cfg.training, cfg.sampler, cfg.loss, std::move(train), std::move(validation),
                  cfg.seed);
  if (resume) trainer.resume(*resume);
  std::ofstream log(out / "train.jsonl", resume ? std::ios::app : std::ios::trunc);
  const TrainResult r = trainer.run(out, &log);
  std::cout << "stopped at step " << r.steps << (r.early_stopped ? " (early stop)" : "") << "; best validation "
            << r.best_validation << " at step " << r.best_step << "\n";
  return 0;
}

struct SeparateArgs {
  std::string checkpoint, mixture, class_name, out;
  std::vector<std::string> examples, negatives;
};

int cmd_separate(const SeparateArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto mode = ckpt.config.mode;
  const bool by_class = !a.class_name.empty();
  if (by_class == !a.examples.empty()) throw Error("give exactly one of --class or --examples");
  if (by_class && mode != ConditioningMode::kClass)
    throw Error("--class needs a class-conditioned checkpoint; this one is " + to_string(mode));
  if (!by_class && mode == ConditioningMode::kClass)
    throw Error("--examples needs a few-shot checkpoint; this one is class-conditioned");
  if (!by_class && (a.examples.size() > 5)) throw Error("at most 5 conditioning examples are supported");
  if (mode == ConditioningMode::kFewShotNeg && a.negatives.empty())
    throw Error("this few-shot+neg checkpoint needs --neg-examples");
  if (mode != ConditioningMode::kFewShotNeg && !a.negatives.empty())
    throw Error("--neg-examples needs a few-shot+neg checkpoint; this one is " + to_string(mode));

  Separator<float> model = instantiate<float>(ckpt);
  ConditioningVector z;
  if (by_class) {
    z = model.condition_on_class(a.class_name);
  } else {
    std::vector<AudioClip> pos, neg;
    for (const auto& f : a.examples) pos.push_back(read_wav_mono(f));
    for (const auto& f : a.negatives) neg.push_back(read_wav_mono(f));
    z = model.condition_on_examples(pos, neg);
  }
  const AudioClip mixture = read_wav_mono(a.mixture);
  write_wav(a.out, separate_track(mixture, z, model));
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint, corpus, config, classes, report, mapping;
  int shots = -1, iterations = -1;
  bool cross_track = false, multi_source = false, negatives = false;
  long long seed = -1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  EvalProtocol p = load_config(a.config).eval;
  if (a.shots > 0) p.n_shots = a.shots;
  if (a.iterations > 0) p.iterations = a.iterations;
  if (a.cross_track) p.source = ConditioningSource::kCrossTrack;
  if (a.multi_source) p.purity = ConditioningPurity::kMultiSource;
  if (a.negatives) p.use_negatives = true;
  if (a.seed >= 0) p.seed = static_cast<std::uint64_t>(a.seed);
  p.validate();
  if (p.use_negatives != (ckpt.config.mode == ConditioningMode::kFewShotNeg))
    throw Error("--negatives must be given exactly when the checkpoint is few-shot+neg (this one is " +
                to_string(ckpt.config.mode) + ")");

  Separator<float> model = instantiate<float>(ckpt);
  const Corpus corpus = load_corpus_dir(a.corpus, mapping_for(a.mapping, ckpt.config.vocabulary));
  const EvalReport report = evaluate_corpus(corpus, split_list(a.classes), model, p);
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw Error("cannot write report: " + a.report);
    write_report_jsonl(report, out);
  }
  print_summary(report, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot conditioned musical source separation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multitrack corpus");
  s->add_option("-c,--config", synth.config, "Run configuration (JSON)");
  s->add_option("-o,--out", synth.out, "Output directory (default: paths.corpus_dir)");
  s->add_option("--tracks", synth.tracks, "Override synth.tracks");
  s->add_option("--seed", synth.seed, "Override synth.seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a separator");
  t->add_option("-c,--config", train.config, "Run configuration (JSON)");
  t->add_option("--corpus", train.corpus, "Corpus directory (overrides paths.corpus_dir)");
  t->add_option("-o,--out", train.out, "Run directory (overrides paths.out_dir)");
  t->add_option("--mode", train.mode, "class | few-shot | few-shot+neg");
  t->add_option("--holdout", train.holdout, "Comma-separated classes excluded as training targets");
  t->add_option("--multi-source", train.multi_source, "Probability of multi-sourced conditioning examples");
  t->add_option("--max-steps", train.max_steps, "Override training.max_steps");
  t->add_option("--resume", train.resume, "Continue from a checkpoint");

  SeparateArgs sep;
  auto* p = app.add_subcommand("separate", "Separate one mixture file");
  p->add_option("--checkpoint", sep.checkpoint, "Checkpoint file")->required();
  p->add_option("-m,--mixture", sep.mixture, "Mixture WAV")->required();
  p->add_option("--class", sep.class_name, "Target class (class-conditioned checkpoints)");
  p->add_option("--examples", sep.examples, "1-5 WAV examples of the target");
  p->add_option("--neg-examples", sep.negatives, "WAV examples of instruments to suppress");
  p->add_option("-o,--out", sep.out, "Output WAV")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a corpus");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  e->add_option("-c,--config", ev.config, "Run configuration providing the eval protocol");
  e->add_option("--classes", ev.classes, "Comma-separated target classes (default: all)");
  e->add_option("--shots", ev.shots, "Conditioning examples per iteration (default 5)");
  e->add_option("--iterations", ev.iterations, "Iterations per track (default 10)");
  e->add_flag("--cross-track", ev.cross_track, "Draw examples from other tracks");
  e->add_flag("--multi-source", ev.multi_source, "Mix one other instrument into every example");
  e->add_flag("--negatives", ev.negatives, "Add negative examples (few-shot+neg checkpoints)");
  e->add_option("--seed", ev.seed, "Protocol seed");
  e->add_option("--report", ev.report, "JSON-lines report path");
  e->add_option("--mapping", ev.mapping, "Stem-name mapping table");

  CLI11_PARSE(app, argc, argv);
  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (p->parsed()) return cmd_separate(sep);
    if (e->parsed()) return cmd_evaluate(ev);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
