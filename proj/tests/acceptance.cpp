// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "fsmss/config.hpp"
#include "fsmss/eval.hpp"
#include "fsmss/train.hpp"
#include "gradcheck.hpp"
#include "json.hpp"

using namespace fsmss;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(2) << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- DSP

Outcome dsp_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double stft_err = 0.0, comp_err = 0.0, ola_err = 0.0;
  const StftConfig cfg;
  for (std::size_t len : {22050u, 66150u, 70001u}) {
    const AudioClip x = testing::noise_clip(len, rng);
    const AudioClip y = istft(stft(x, cfg));
    for (std::size_t i = 0; i < len; ++i) stft_err = std::max(stft_err, std::abs(y.samples[i] - x.samples[i]));

    const auto spec = stft(x, cfg);
    const auto back = decompress(compress(spec));
    for (std::size_t k = 0; k < spec.data.size(); ++k)
      comp_err = std::max(comp_err, std::abs(back.data[k] - spec.data[k]) / std::max(1.0, std::abs(spec.data[k])));

    for (double overlap : {0.0, 0.25, 0.5}) {
      const auto z = overlap_add(chunk(x, 8192, overlap), len);
      for (std::size_t i = 0; i < len; ++i) ola_err = std::max(ola_err, std::abs(z.samples[i] - x.samples[i]));
    }
  }
  const double t = seconds_since(t0);
  return {stft_err < 1e-6 && comp_err < 1e-9 && ola_err < 1e-9 && t < 60.0,
          "stft round trip " + sci(stft_err) + ", compress " + sci(comp_err) + ", overlap-add " + sci(ola_err) +
              ", " + fmt(t, 1) + " s"};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    ConditioningMode mode;
    LossConfig loss;
  };
  LossConfig sdr_only, mae_only, ratio;
  sdr_only.w_mae = 0.0;
  mae_only.w_sdr = 0.0;
  ratio.sdr_form = SdrForm::kRatio;
  const std::vector<Case> cases = {{ConditioningMode::kClass, LossConfig{}},
                                   {ConditioningMode::kFewShot, LossConfig{}},
                                   {ConditioningMode::kFewShotNeg, LossConfig{}},
                                   {ConditioningMode::kFewShot, sdr_only},
                                   {ConditioningMode::kFewShot, mae_only},
                                   {ConditioningMode::kFewShot, ratio}};
  int checked = 0;
  double worst = 0.0;
  std::size_t failures = 0;
  std::set<std::string> groups;
  std::uint64_t seed = 11;
  for (const auto& c : cases) {
    const auto r = testing::gradient_check(c.mode, c.loss, seed++);
    checked += r.checked;
    worst = std::max(worst, r.worst);
    failures += r.failures.size();
    for (const auto& p : r.params) groups.insert(p.substr(0, p.find('.')));
  }
  const bool covers = groups.count("unet") && groups.count("film") && groups.count("encoder");
  const double t = seconds_since(t0);
  return {failures == 0 && worst < 1e-4 && covers && t < 300.0,
          std::to_string(checked) + " entries, worst relative error " + sci(worst) + ", " +
              std::to_string(groups.size()) + " parameter groups, " + fmt(t, 1) + " s"};
}

// ---------------------------------------------------------------- conditioning

Outcome conditioning_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(103);
  std::normal_distribution<double> nd;
  bool ok = true;
  std::vector<ConditioningVector> vs(5);
  for (auto& v : vs) {
    v.values.resize(512);
    for (auto& x : v.values) x = nd(rng);
  }
  const auto base = aggregate(vs);
  for (int p = 0; p < 50; ++p) {
    std::shuffle(vs.begin(), vs.end(), rng);
    ok = ok && aggregate(vs).values == base.values;
  }
  const bool invariant = ok;

  const InstrumentVocabulary vocab;
  bool round_trip = true;
  for (int i = 0; i < vocab.size(); ++i) {
    const auto z = one_hot(vocab.name(i), vocab);
    const auto hot = std::max_element(z.values.begin(), z.values.end()) - z.values.begin();
    const double sum = std::accumulate(z.values.begin(), z.values.end(), 0.0);
    round_trip = round_trip && vocab.name(static_cast<int>(hot)) == vocab.name(i) && sum == 1.0;
  }

  SeparatorConfig cfg;
  cfg.mode = ConditioningMode::kFewShotNeg;
  Separator<float> model(cfg);
  model.init(3);
  bool dims = true;
  for (double seconds : {0.5, 3.0, 10.0})
    dims = dims && model.encode_example(testing::noise_clip(static_cast<std::size_t>(seconds * 22050), rng)).dim() == 512;
  bool fused_ok = true;
  for (int i = 0; i < 5; ++i) {
    const auto f = model.fuse(model.encode_example(testing::noise_clip(22050, rng)),
                              model.encode_example(testing::noise_clip(22050, rng)));
    fused_ok = fused_ok && f.dim() == 512 && std::all_of(f.values.begin(), f.values.end(), [](double v) { return v >= 0.0; });
  }
  const double t = seconds_since(t0);
  return {invariant && round_trip && dims && fused_ok && t < 60.0,
          std::string("permutation ") + (invariant ? "exact" : "differs") + ", one-hot " +
              (round_trip ? "ok" : "broken") + ", encoder dims " + (dims ? "512" : "wrong") + ", fuse " +
              (fused_ok ? "512 nonnegative" : "wrong") + ", " + fmt(t, 1) + " s"};
}

// ---------------------------------------------------------------- SDR oracle

Outcome sdr_oracle() {
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<double> freq(50.0, 4000.0), target_db(-10.0, 40.0), amp(0.05, 1.0);
  std::uniform_int_distribution<int> secs(1, 6);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int sr = 22050;
    const std::size_t n = static_cast<std::size_t>(secs(rng)) * sr;
    const double f = freq(rng), a = amp(rng), want = target_db(rng);
    AudioClip s(n, sr), e(n, sr);
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = a * std::sin(2.0 * M_PI * f * static_cast<double>(i) / sr);
    // Per 1 s window, noise orthogonal to the reference and scaled to the target ratio.
    for (std::size_t w = 0; w < n; w += sr) {
      std::vector<double> noise(sr);
      for (auto& v : noise) v = nd(rng);
      double dot = 0.0, ss = 0.0;
      for (int i = 0; i < sr; ++i) {
        dot += noise[i] * s.samples[w + i];
        ss += s.samples[w + i] * s.samples[w + i];
      }
      double nn = 0.0;
      for (int i = 0; i < sr; ++i) {
        noise[i] -= dot / ss * s.samples[w + i];
        nn += noise[i] * noise[i];
      }
      const double k = std::sqrt(ss / nn * std::pow(10.0, -want / 10.0));
      for (int i = 0; i < sr; ++i) e.samples[w + i] = s.samples[w + i] + k * noise[i];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += s.samples[i] * s.samples[i];
      den += (s.samples[i] - e.samples[i]) * (s.samples[i] - e.samples[i]);
    }
    const double brute = 10.0 * std::log10(num / den);
    worst = std::max(worst, std::abs(compute_sdr(e, s).db - brute));
  }
  return {worst < 0.01, "100 cases, worst difference " + sci(worst) + " dB"};
}

// ---------------------------------------------------------------- desk-scale experiments

struct Desk {
  long steps = 800;
  int batch = 8;
  int base_channels = 4;
  int encoder_filters = 8;
  double learning_rate = 1e-3;
  int train_tracks = 40;
  int test_tracks = 8;
  int iterations = 10;
  int validate_every = 100;
  fs::path workdir;
};

struct Experiment {
  std::string name;
  ConditioningMode mode = ConditioningMode::kFewShot;
  SynthSpec synth = SynthSpec::three_class();
  std::vector<std::string> holdout;
  double multi_source_prob = 0.0;
  std::uint64_t seed = 1;
};

RunConfig run_config(const Desk& d, const Experiment& e) {
  RunConfig rc;
  rc.unet.base_channels = d.base_channels;
  rc.encoder.filters = d.encoder_filters;
  rc.training.mode = e.mode;
  rc.training.batch_size = d.batch;
  rc.training.max_steps = d.steps;
  rc.training.validate_every = d.validate_every;
  rc.training.patience = 1000;
  rc.training.log_every = 25;
  rc.training.adam.learning_rate = d.learning_rate;
  rc.sampler.multi_source_prob = e.multi_source_prob;
  rc.sampler.holdout = e.holdout;
  rc.sampler.rng_seed = e.seed;
  rc.synth = e.synth;
  rc.synth.tracks = d.train_tracks;
  rc.synth.seed = e.seed;
  rc.seed = e.seed;
  return rc;
}

Corpus test_corpus(const Desk& d, SynthSpec spec) {
  spec.tracks = d.test_tracks;
  spec.seed = 9001;
  return generate_synthetic_corpus(spec);
}

struct Trained {
  std::unique_ptr<Trainer> trainer;
  TrainResult result;
  double seconds = 0.0;
};

Trained train(const Desk& d, const Experiment& e) {
  const RunConfig rc = run_config(d, e);
  auto [tr, va] = split_corpus(generate_synthetic_corpus(rc.synth), rc.training.validation_fraction, rc.seed);
  Trained t;
  const auto t0 = std::chrono::steady_clock::now();
  t.trainer = std::make_unique<Trainer>(rc.separator(), rc.training, rc.sampler, rc.loss, tr, va, rc.seed);
  std::ofstream log(d.workdir / (e.name + ".train.jsonl"));
  t.result = t.trainer->run(std::nullopt, &log);
  t.seconds = seconds_since(t0);
  std::cout << "  trained " << e.name << ": " << t.result.steps << " steps, best validation "
            << fmt(t.result.best_validation) << " at " << t.result.best_step << ", " << fmt(t.seconds, 0) << " s\n"
            << std::flush;
  return t;
}

EvalReport evaluate(const Desk& d, Separator<float>& model, const Corpus& test, const std::string& name,
                    EvalProtocol p, const std::vector<std::string>& classes = {}) {
  p.seed = 77;
  const auto rep = evaluate_corpus(test, classes, model, p);
  std::ofstream out(d.workdir / (name + ".eval.jsonl"));
  write_report_jsonl(rep, out);
  std::cout << "  " << name << "\n";
  std::ostringstream table;
  print_summary(rep, table);
  std::istringstream lines(table.str());
  for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
  std::cout << std::flush;
  return rep;
}

EvalProtocol protocol(int shots, int iterations) {
  EvalProtocol p;
  p.n_shots = shots;
  p.iterations = iterations;
  return p;
}

double mean_track_std(const EvalReport& r) {
  double s = 0.0;
  for (const auto& t : r.tracks) s += t.std;
  return r.tracks.empty() ? 0.0 : s / static_cast<double>(r.tracks.size());
}

std::vector<std::string> class_names(const EvalReport& r) {
  std::vector<std::string> out;
  for (const auto& c : r.classes) out.push_back(c.target_class);
  return out;
}

// Every reported number of a run, for the determinism check.
json fingerprint(const TrainResult& r, const EvalReport& rep, Separator<float>& model) {
  json j;
  j["losses"] = r.losses;
  j["validations"] = r.validations;
  std::ostringstream o;
  write_report_jsonl(rep, o);
  j["report"] = o.str();
  double checksum = 0.0;
  for (const auto& [name, t] : model.state())
    for (float v : t.data) checksum += static_cast<double>(v);
  j["state_sum"] = checksum;
  j["state"] = json::array();
  for (const auto& [name, t] : model.state()) j["state"].push_back(json(t.data));
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  Desk desk;
  std::string only;
  std::string workdir = (fs::temp_directory_path() / "fsmss_acceptance").string();
  app.add_option("--steps", desk.steps, "Training steps per desk-scale model");
  app.add_option("--batch", desk.batch, "Batch size");
  app.add_option("--base-channels", desk.base_channels, "U-Net base channels");
  app.add_option("--encoder-filters", desk.encoder_filters, "Encoder filters");
  app.add_option("--lr", desk.learning_rate, "Adam learning rate");
  app.add_option("--test-tracks", desk.test_tracks, "Test tracks per corpus");
  app.add_option("--iterations", desk.iterations, "Evaluation iterations");
  app.add_option("--workdir", workdir, "Logs and reports");
  app.add_option("--only", only, "Comma-separated criteria to run");
  CLI11_PARSE(app, argc, argv);
  desk.workdir = workdir;
  fs::create_directories(desk.workdir);

  std::set<int> selected;
  for (std::istringstream in(only); in.good();) {
    std::string tok;
    std::getline(in, tok, ',');
    if (!tok.empty()) selected.insert(std::stoi(tok));
  }
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  std::map<int, Outcome> results;
  auto record = [&](int c, const std::string& title, const std::function<Outcome()>& fn) {
    if (!wanted(c)) return;
    std::cout << "criterion " << c << ": " << title << "\n" << std::flush;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    results[c] = o;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << ": " << title << " (" << o.detail << ")\n\n"
              << std::flush;
  };

  record(1, "DSP invariants", dsp_invariants);
  record(2, "gradient checks", gradient_checks);
  record(3, "conditioning properties", conditioning_properties);
  record(9, "SDR oracle", sdr_oracle);

  const Corpus test3 = test_corpus(desk, SynthSpec::three_class());
  std::optional<Trained> fewshot;
  auto need_fewshot = [&]() -> Trained& {
    if (!fewshot) fewshot = train(desk, {"fewshot", ConditioningMode::kFewShot});
    return *fewshot;
  };
  std::optional<EvalReport> same_track;
  auto need_same_track = [&]() -> const EvalReport& {
    if (!same_track) same_track = evaluate(desk, need_fewshot().trainer->model(), test3, "fewshot_3shot", protocol(3, 1));
    return *same_track;
  };

  record(4, "desk-scale few-shot training", [&] {
    auto& fsm = need_fewshot();
    const auto& rep = need_same_track();
    bool ok = fsm.result.steps <= 5000 && fsm.seconds <= 7200.0;
    std::string detail;
    for (const auto& c : rep.classes) {
      ok = ok && c.mean >= 5.0 && c.mixture_mean <= 0.0;
      detail += c.target_class + " " + fmt(c.mean) + " dB (mixture " + fmt(c.mixture_mean) + "), ";
    }
    return Outcome{ok, detail + std::to_string(fsm.result.steps) + " steps, " + fmt(fsm.seconds, 0) + " s"};
  });

  record(5, "shots vs variance", [&] {
    auto& model = need_fewshot().trainer->model();
    const auto one = evaluate(desk, model, test3, "fewshot_1shot_x10", protocol(1, desk.iterations));
    const auto five = evaluate(desk, model, test3, "fewshot_5shot_x10", protocol(5, desk.iterations));
    const double s1 = mean_track_std(one), s5 = mean_track_std(five);
    return Outcome{s5 < s1, "mean per-track std n=1 " + fmt(s1, 3) + " dB, n=5 " + fmt(s5, 3) + " dB over " +
                                std::to_string(desk.iterations) + " iterations"};
  });

  record(6, "unseen class", [&] {
    const std::string held = "guitar";
    Experiment fs_exp{"holdout_fewshot", ConditioningMode::kFewShot, SynthSpec::eight_class(), {held}};
    Experiment cls_exp{"holdout_class", ConditioningMode::kClass, SynthSpec::eight_class(), {held}};
    const Corpus test8 = test_corpus(desk, SynthSpec::eight_class());
    auto fsm = train(desk, fs_exp);
    const auto fs_rep = evaluate(desk, fsm.trainer->model(), test8, "holdout_fewshot_5shot", protocol(5, 1), {held});
    fsm.trainer.reset();
    auto cls = train(desk, cls_exp);
    const auto cls_rep = evaluate(desk, cls.trainer->model(), test8, "holdout_class", protocol(5, 1), {held});
    const double a = fs_rep.summary(held).mean, b = cls_rep.summary(held).mean;
    return Outcome{a - b >= 3.0, held + ": few-shot " + fmt(a) + " dB, class baseline " + fmt(b) + " dB, margin " +
                                     fmt(a - b) + " dB"};
  });

  record(7, "conditioning constraints", [&] {
    auto& model = need_fewshot().trainer->model();
    const auto& same = need_same_track();
    auto cross_p = protocol(3, 1);
    cross_p.source = ConditioningSource::kCrossTrack;
    const auto cross = evaluate(desk, model, test3, "fewshot_cross_track", cross_p);
    auto ms_p = protocol(3, 1);
    ms_p.purity = ConditioningPurity::kMultiSource;
    const auto degraded = evaluate(desk, model, test3, "fewshot_multi_source_test", ms_p);
    auto ms = train(desk, {"multi_source", ConditioningMode::kFewShot, SynthSpec::three_class(), {}, 0.5});
    const auto recovered = evaluate(desk, ms.trainer->model(), test3, "ms_multi_source_test", ms_p);

    bool order = true;
    int recovered_classes = 0;
    std::string detail;
    for (const auto& name : class_names(same)) {
      const double s = same.summary(name).mean, c = cross.summary(name).mean, m = same.summary(name).mixture_mean;
      const double d = degraded.summary(name).mean, r = recovered.summary(name).mean;
      order = order && c < s && c > m;
      if (d < s && r - d >= 1.0) ++recovered_classes;
      detail += name + " same " + fmt(s) + " cross " + fmt(c) + " mixture " + fmt(m) + " ms-test " + fmt(d) +
                " MS " + fmt(r) + "; ";
    }
    detail += "MS recovers >= 1 dB on " + std::to_string(recovered_classes) + " classes";
    return Outcome{order && recovered_classes >= 2, detail};
  });

  record(8, "negative conditioning", [&] {
    const auto& pos = need_same_track();
    auto neg = train(desk, {"fewshot_neg", ConditioningMode::kFewShotNeg});
    auto p = protocol(3, 1);
    p.use_negatives = true;
    const auto rep = evaluate(desk, neg.trainer->model(), test3, "fewshot_neg_3shot", p);
    int better = 0;
    std::string detail;
    for (const auto& name : class_names(pos)) {
      const double a = rep.summary(name).mean, b = pos.summary(name).mean;
      if (a >= b) ++better;
      detail += name + " +neg " + fmt(a) + " vs " + fmt(b) + "; ";
    }
    return Outcome{better >= 2, detail + std::to_string(better) + " of 3 classes match or exceed"};
  });

  record(10, "determinism", [&] {
    Desk small = desk;
    small.steps = 20;
    small.validate_every = 10;
    small.test_tracks = 2;
    small.workdir = desk.workdir / "determinism";
    fs::create_directories(small.workdir);
    const Corpus test_small = test_corpus(small, SynthSpec::three_class());
    std::vector<json> runs;
    for (int r = 0; r < 2; ++r) {
      auto t = train(small, {"rerun", ConditioningMode::kFewShot});
      const auto rep = evaluate(small, t.trainer->model(), test_small, "rerun", protocol(3, 2));
      runs.push_back(fingerprint(t.result, rep, t.trainer->model()));
    }
    const bool same = runs[0] == runs[1];
    return Outcome{same, std::string("two runs of the few-shot experiment (") + std::to_string(small.steps) +
                             " steps, training and evaluation) " + (same ? "identical" : "differ")};
  });

  int failed = 0;
  std::cout << "summary\n";
  for (const auto& [c, o] : results) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << "\n";
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
