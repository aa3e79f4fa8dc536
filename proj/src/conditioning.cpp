// SPDX-License-Identifier: Apache-2.0
#include "fsmss/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fsmss {

// ------------------------------------------------------------ vocabulary

namespace {
const std::vector<std::string>& default_names() {
  static const std::vector<std::string> names = {
      "vocals",   "drums",      "bass",     "guitar",      "piano",   "keyboards",
      "synthesizer", "strings", "brass",    "woodwinds",   "accordion", "percussion",
      "harp",     "choir",      "mallets",  "pipe organ",  "bagpipes", "whistling"};
  return names;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

InstrumentVocabulary::InstrumentVocabulary() : InstrumentVocabulary(default_names()) {}

InstrumentVocabulary::InstrumentVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw Error("instrument vocabulary must not be empty");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error("instrument vocabulary contains an empty name");
    if (!seen.insert(n).second) throw Error("duplicate instrument class in vocabulary: " + n);
  }
}

InstrumentVocabulary InstrumentVocabulary::from_text(const std::string& text) {
  std::vector<std::string> names;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (!line.empty()) names.push_back(line);
  }
  return InstrumentVocabulary(std::move(names));
}

InstrumentVocabulary InstrumentVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

bool InstrumentVocabulary::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

int InstrumentVocabulary::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("unknown instrument class '" + name + "'; vocabulary: " + joined());
  return static_cast<int>(it - names_.begin());
}

std::string InstrumentVocabulary::joined() const {
  std::string s;
  for (const auto& n : names_) {
    if (!s.empty()) s += ", ";
    s += n;
  }
  return s;
}

ConditioningVector one_hot(const std::string& class_name, const InstrumentVocabulary& vocab) {
  ConditioningVector z{std::vector<double>(static_cast<std::size_t>(vocab.size()), 0.0), VectorKind::kClass};
  z.values[static_cast<std::size_t>(vocab.index_of(class_name))] = 1.0;
  return z;
}

ConditioningVector aggregate(const std::vector<ConditioningVector>& vectors) {
  if (vectors.empty()) throw Error("aggregate: no conditioning vectors");
  const int dim = vectors.front().dim();
  ConditioningVector out{std::vector<double>(static_cast<std::size_t>(dim), 0.0), VectorKind::kEmbedding};
  for (const auto& v : vectors) {
    if (v.kind != VectorKind::kEmbedding) throw Error("aggregate: only embedding vectors can be averaged");
    if (v.dim() != dim) throw Error("aggregate: dimension mismatch");
  }
  std::vector<double> column(vectors.size());
  for (int i = 0; i < dim; ++i) {
    for (std::size_t k = 0; k < vectors.size(); ++k) column[k] = vectors[k].values[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double x : column) sum += x;
    out.values[i] = sum / static_cast<double>(vectors.size());
  }
  return out;
}

// ------------------------------------------------------------ mel

void EncoderConfig::validate() const {
  if (blocks < 1 || filters < 1 || kernel < 1 || kernel % 2 == 0) throw Error("invalid encoder configuration");
  if (input_bands % (1 << blocks) != 0)
    throw Error("encoder.input_bands must be divisible by 2^blocks");
  if (!(fmax > fmin) || fmin < 0.0) throw Error("encoder mel range must satisfy 0 <= fmin < fmax");
  if (min_seconds <= 0.0) throw Error("encoder.min_seconds must be positive");
}

namespace {
constexpr double kMelLinearHz = 200.0 / 3.0;
constexpr double kMelLogHz = 1000.0;
constexpr double kMelLogStart = kMelLogHz / kMelLinearHz;
const double kMelLogStep = std::log(6.4) / 27.0;
}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMelLogHz) return hz / kMelLinearHz;
  return kMelLogStart + std::log(hz / kMelLogHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelLogStart) return mel * kMelLinearHz;
  return kMelLogHz * std::exp(kMelLogStep * (mel - kMelLogStart));
}

MelFilterbank::MelFilterbank(int bands, int fft_size, int sample_rate, double fmin, double fmax) {
  if (bands < 1) throw Error("mel filterbank needs at least one band");
  const int bins = fft_size / 2 + 1;
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
  start_.resize(static_cast<std::size_t>(bands));
  weights_.resize(static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    const double f0 = edges[b], f1 = edges[b + 1], f2 = edges[b + 2];
    const double norm = 2.0 / (f2 - f0);
    int first = -1;
    std::vector<double> w;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double v = std::max(0.0, std::min((f - f0) / (f1 - f0), (f2 - f) / (f2 - f1))) * norm;
      if (v > 0.0) {
        if (first < 0) first = k;
        w.resize(static_cast<std::size_t>(k - first) + 1, 0.0);
        w.back() = v;
      }
    }
    start_[b] = std::max(first, 0);
    weights_[b] = std::move(w);
  }
}

void MelFilterbank::apply(const double* magnitude, double* out) const {
  for (std::size_t b = 0; b < start_.size(); ++b) {
    double acc = 0.0;
    const auto& w = weights_[b];
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * magnitude[start_[b] + static_cast<int>(i)];
    out[b] = acc;
  }
}

double MelFilterbank::weight(int band, int bin) const {
  const auto& w = weights_.at(static_cast<std::size_t>(band));
  const int i = bin - start_[band];
  return (i >= 0 && i < static_cast<int>(w.size())) ? w[i] : 0.0;
}

MelFeatures mel_features(const AudioClip& clip, const StftConfig& stft_cfg, const MelFilterbank& bank) {
  const auto spec = stft(clip, stft_cfg);
  MelFeatures f;
  f.bands = bank.bands();
  f.frames = spec.frames;
  f.data.assign(static_cast<std::size_t>(f.bands) * f.frames, 0.0);
  std::vector<double> mag(static_cast<std::size_t>(spec.bins)), col(static_cast<std::size_t>(f.bands));
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) mag[k] = std::abs(spec.at(k, t));
    bank.apply(mag.data(), col.data());
    for (int b = 0; b < f.bands; ++b) f.data[static_cast<std::size_t>(b) * f.frames + t] = std::log1p(col[b]);
  }
  return f;
}

// ------------------------------------------------------------ encoder

template <typename T>
ConditioningEncoder<T>::ConditioningEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const nn::ConvGeometry geom{cfg.kernel, 1, cfg.kernel / 2};
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string name = "encoder.block" + std::to_string(i);
    conv_.emplace_back(name + ".conv", i == 0 ? 1 : cfg.filters, cfg.filters, geom);
    bn_.emplace_back(name + ".bn", cfg.filters, cfg.bn_momentum);
    act_.emplace_back(T(0));
    pool_.emplace_back();
  }
}

template <typename T>
void ConditioningEncoder<T>::init(std::mt19937_64& rng) {
  for (auto& c : conv_) c.init(rng);
}

template <typename T>
Tensor<T> ConditioningEncoder<T>::forward(const Tensor<T>& x, bool training) {
  if (x.c() != 1 || x.h() != cfg_.input_bands)
    throw Error("conditioning encoder expects [N x 1 x " + std::to_string(cfg_.input_bands) + " x T], got " +
                shape_string(x));
  if ((x.w() >> cfg_.blocks) < 1)
    throw Error("conditioning example too short: " + std::to_string(x.w()) + " frames");
  Tensor<T> h = x;
  for (int i = 0; i < cfg_.blocks; ++i) h = pool_[i].forward(act_[i].forward(bn_[i].forward(conv_[i].forward(h), training)));
  return time_max_.forward(h);
}

template <typename T>
void ConditioningEncoder<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = time_max_.backward(grad_out);
  for (int i = cfg_.blocks - 1; i >= 0; --i)
    g = conv_[i].backward(bn_[i].backward(act_[i].backward(pool_[i].backward(g))), i > 0);
}

template <typename T>
void ConditioningEncoder<T>::set_recalibration(bool on) {
  for (auto& bn : bn_) on ? bn.begin_recalibration() : bn.end_recalibration();
}

template <typename T>
void ConditioningEncoder<T>::collect(nn::ParamRefs<T>& refs) {
  for (int i = 0; i < cfg_.blocks; ++i) {
    conv_[i].collect(refs);
    bn_[i].collect(refs);
  }
}

// ------------------------------------------------------------ fusion

template <typename T>
PosNegFusion<T>::PosNegFusion(int dim) : fc_("fusion.fc", 2 * dim, dim) {}

template <typename T>
void PosNegFusion<T>::init(std::mt19937_64& rng) {
  fc_.init(rng);
}

template <typename T>
Tensor<T> PosNegFusion<T>::forward(const Tensor<T>& pos, const Tensor<T>& neg) {
  if (!pos.same_shape(neg) || static_cast<int>(pos.sample_size()) != dim())
    throw Error("fusion expects two [N x " + std::to_string(dim()) + "] inputs");
  Tensor<T> cat(pos.n(), 2 * dim());
  for (int i = 0; i < pos.n(); ++i) {
    std::copy_n(pos.sample(i), dim(), cat.sample(i));
    std::copy_n(neg.sample(i), dim(), cat.sample(i) + dim());
  }
  return relu_.forward(fc_.forward(cat));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> PosNegFusion<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = fc_.backward(relu_.backward(grad_out));
  Tensor<T> gp(g.n(), dim()), gn(g.n(), dim());
  for (int i = 0; i < g.n(); ++i) {
    std::copy_n(g.sample(i), dim(), gp.sample(i));
    std::copy_n(g.sample(i) + dim(), dim(), gn.sample(i));
  }
  return {std::move(gp), std::move(gn)};
}

template <typename T>
void PosNegFusion<T>::collect(nn::ParamRefs<T>& refs) {
  fc_.collect(refs);
}

template class ConditioningEncoder<float>;
template class ConditioningEncoder<double>;
template class PosNegFusion<float>;
template class PosNegFusion<double>;

}  // namespace fsmss
