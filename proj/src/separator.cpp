// SPDX-License-Identifier: Apache-2.0
#include "fsmss/separator.hpp"

#include <algorithm>
#include <cmath>

namespace fsmss {

std::string to_string(ConditioningMode m) {
  switch (m) {
    case ConditioningMode::kClass: return "class";
    case ConditioningMode::kFewShot: return "few-shot";
    case ConditioningMode::kFewShotNeg: return "few-shot+neg";
  }
  return "?";
}

ConditioningMode conditioning_mode_from_string(const std::string& s) {
  if (s == "class") return ConditioningMode::kClass;
  if (s == "few-shot") return ConditioningMode::kFewShot;
  if (s == "few-shot+neg") return ConditioningMode::kFewShotNeg;
  throw Error("unknown conditioning mode '" + s + "' (expected class, few-shot or few-shot+neg)");
}

std::size_t SeparatorConfig::chunk_samples() const {
  return static_cast<std::size_t>(std::llround(chunk_seconds * sample_rate));
}

int SeparatorConfig::conditioning_dim() const {
  return mode == ConditioningMode::kClass ? vocabulary.size() : encoder.embedding_dim();
}

void SeparatorConfig::validate() const {
  unet.validate();
  encoder.validate();
  stft.validate();
  if (sample_rate <= 0) throw Error("sample_rate must be positive");
  if (chunk_seconds <= 0.0) throw Error("chunk_seconds must be positive");
  if (unet.in_freq > stft.bins())
    throw Error("unet.in_freq " + std::to_string(unet.in_freq) + " exceeds the " + std::to_string(stft.bins()) +
                " STFT bins");
  const int frames = stft.frames(chunk_samples());
  if (unet.in_frames > frames)
    throw Error("unet.in_frames " + std::to_string(unet.in_frames) + " exceeds the " + std::to_string(frames) +
                " frames of a chunk");
}

AudioClip reconstruct(const ComplexSpectrogram& compressed, const ComplexMask& mask) {
  ComplexSpectrogram y = compressed;
  std::fill(y.data.begin(), y.data.end(), std::complex<double>{});
  for (int f = 0; f < mask.bins; ++f)
    for (int t = 0; t < mask.frames; ++t)
      y.at(f, t) = decompress_value(compressed.at(f, t) * mask.data[static_cast<std::size_t>(f) * mask.frames + t]);
  return istft(y);
}

namespace {

/// Vector-Jacobian product of decompress_value at y.
std::complex<double> decompress_vjp(std::complex<double> y, std::complex<double> g) {
  const double m = std::abs(y);
  if (m == 0.0) return g;
  const double f = std::expm1(m) / m;
  double fp;
  if (m < 1e-3)
    fp = 0.5 + m / 3.0 + m * m / 8.0 + m * m * m / 30.0;
  else
    fp = (m * std::exp(m) - std::expm1(m)) / (m * m);
  const std::complex<double> unit = y / m;
  const double proj = unit.real() * g.real() + unit.imag() * g.imag();
  return f * g + fp * m * proj * unit;
}

}  // namespace

// ------------------------------------------------------------ Separator

template <typename T>
Separator<T>::Separator(SeparatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  unet_ = UNet<T>(cfg_.unet);
  film_ = FilmGenerator<T>(cfg_.conditioning_dim(), cfg_.unet.bottleneck_channels());
  if (cfg_.mode != ConditioningMode::kClass) {
    encoder_ = ConditioningEncoder<T>(cfg_.encoder);
    mel_ = MelFilterbank(cfg_.encoder.input_bands, cfg_.stft.fft_size, cfg_.sample_rate, cfg_.encoder.fmin,
                         cfg_.encoder.fmax);
  }
  if (cfg_.mode == ConditioningMode::kFewShotNeg) fusion_ = PosNegFusion<T>(cfg_.encoder.embedding_dim());
}

template <typename T>
void Separator<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  unet_.init(rng);
  film_.init();
  if (cfg_.mode != ConditioningMode::kClass) encoder_.init(rng);
  if (cfg_.mode == ConditioningMode::kFewShotNeg) fusion_.init(rng);
}

template <typename T>
nn::ParamRefs<T> Separator<T>::parameters() {
  nn::ParamRefs<T> refs;
  unet_.collect(refs);
  film_.collect(refs);
  if (cfg_.mode != ConditioningMode::kClass) encoder_.collect(refs);
  if (cfg_.mode == ConditioningMode::kFewShotNeg) fusion_.collect(refs);
  return refs;
}

template <typename T>
void Separator<T>::zero_grad() {
  for (auto* p : parameters().params) p->grad.zero();
}

template <typename T>
void Separator<T>::load_state(const std::map<std::string, Tensor<float>>& tensors) {
  auto refs = parameters();
  auto copy_into = [&](const std::string& name, Tensor<T>& dst) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape != dst.shape || it->second.data.size() != dst.data.size())
      throw Error("checkpoint tensor '" + name + "' has shape " + shape_string(it->second) + ", model expects " +
                  shape_string(dst));
    std::transform(it->second.data.begin(), it->second.data.end(), dst.data.begin(),
                   [](float v) { return static_cast<T>(v); });
  };
  for (auto* p : refs.params) copy_into(p->name, p->value);
  for (auto& b : refs.buffers) copy_into(b.name, *b.value);
}

template <typename T>
std::map<std::string, Tensor<float>> Separator<T>::state() {
  std::map<std::string, Tensor<float>> out;
  auto convert = [](const Tensor<T>& src) {
    Tensor<float> t(src.n(), src.c(), src.h(), src.w());
    std::transform(src.data.begin(), src.data.end(), t.data.begin(), [](T v) { return static_cast<float>(v); });
    return t;
  };
  auto refs = parameters();
  for (auto* p : refs.params) out.emplace(p->name, convert(p->value));
  for (auto& b : refs.buffers) out.emplace(b.name, convert(*b.value));
  return out;
}

template <typename T>
void Separator<T>::check_conditioning(const ConditioningVector& z) const {
  const bool want_class = cfg_.mode == ConditioningMode::kClass;
  if (want_class && z.kind != VectorKind::kClass)
    throw Error("class-conditioned model requires a class (one-hot) conditioning vector");
  if (!want_class && z.kind != VectorKind::kEmbedding)
    throw Error(to_string(cfg_.mode) + " model requires an example-derived conditioning vector, not a class label");
  if (z.dim() != cfg_.conditioning_dim())
    throw Error("conditioning vector has dimension " + std::to_string(z.dim()) + ", model expects " +
                std::to_string(cfg_.conditioning_dim()));
  for (double v : z.values)
    if (!std::isfinite(v)) throw Error("conditioning vector contains non-finite values");
}

template <typename T>
ConditioningVector Separator<T>::condition_on_class(const std::string& name) const {
  if (cfg_.mode != ConditioningMode::kClass)
    throw Error("--class conditioning needs a class-conditioned model; this model is " + to_string(cfg_.mode));
  return one_hot(name, cfg_.vocabulary);
}

template <typename T>
MelFeatures Separator<T>::features(const AudioClip& clip) const {
  if (cfg_.mode == ConditioningMode::kClass) throw Error("class-conditioned model has no example encoder");
  const AudioClip at_rate = clip.sample_rate == cfg_.sample_rate ? clip : resample(clip, cfg_.sample_rate);
  if (at_rate.duration() + 1e-9 < cfg_.encoder.min_seconds)
    throw Error("conditioning example is " + std::to_string(at_rate.duration()) + " s; at least " +
                std::to_string(cfg_.encoder.min_seconds) + " s required");
  return mel_features(at_rate, cfg_.stft, mel_);
}

namespace {
template <typename T>
Tensor<T> features_tensor(const std::vector<const MelFeatures*>& feats) {
  const int bands = feats.front()->bands, frames = feats.front()->frames;
  Tensor<T> x(static_cast<int>(feats.size()), 1, bands, frames);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i]->bands != bands || feats[i]->frames != frames)
      throw Error("conditioning examples in one batch must have equal length");
    std::transform(feats[i]->data.begin(), feats[i]->data.end(), x.sample(static_cast<int>(i)),
                   [](double v) { return static_cast<T>(v); });
  }
  return x;
}

template <typename T>
ConditioningVector to_vector(const Tensor<T>& t, int row) {
  ConditioningVector z;
  z.kind = VectorKind::kEmbedding;
  z.values.assign(t.sample(row), t.sample(row) + t.sample_size());
  return z;
}

template <typename T>
Tensor<T> to_tensor(const ConditioningVector& z) {
  Tensor<T> t(1, z.dim());
  std::transform(z.values.begin(), z.values.end(), t.data.begin(), [](double v) { return static_cast<T>(v); });
  return t;
}
}  // namespace

template <typename T>
ConditioningVector Separator<T>::encode_example(const AudioClip& example) {
  const MelFeatures f = features(example);
  const Tensor<T> emb = encoder_.forward(features_tensor<T>({&f}), false);
  return to_vector(emb, 0);
}

template <typename T>
ConditioningVector Separator<T>::fuse(const ConditioningVector& pos, const ConditioningVector& neg) {
  if (cfg_.mode != ConditioningMode::kFewShotNeg)
    throw Error("negative examples need a few-shot+neg model; this model is " + to_string(cfg_.mode));
  if (pos.kind != VectorKind::kEmbedding || neg.kind != VectorKind::kEmbedding)
    throw Error("fuse: both inputs must be embedding vectors");
  if (pos.dim() != fusion_.dim() || neg.dim() != fusion_.dim())
    throw Error("fuse: expected two vectors of dimension " + std::to_string(fusion_.dim()));
  return to_vector(fusion_.forward(to_tensor<T>(pos), to_tensor<T>(neg)), 0);
}

template <typename T>
ConditioningVector Separator<T>::condition_on_examples(const std::vector<AudioClip>& positives,
                                                       const std::vector<AudioClip>& negatives) {
  if (cfg_.mode == ConditioningMode::kClass)
    throw Error("example conditioning needs a few-shot model; this model is class-conditioned");
  if (positives.empty()) throw Error("at least one conditioning example is required");
  const bool want_neg = cfg_.mode == ConditioningMode::kFewShotNeg;
  if (want_neg && negatives.empty()) throw Error("few-shot+neg model requires negative examples");
  if (!want_neg && !negatives.empty()) throw Error("negative examples need a few-shot+neg model");
  std::vector<ConditioningVector> pos;
  for (const auto& c : positives) pos.push_back(encode_example(c));
  ConditioningVector z = aggregate(pos);
  if (want_neg) {
    std::vector<ConditioningVector> neg;
    for (const auto& c : negatives) neg.push_back(encode_example(c));
    z = fuse(z, aggregate(neg));
  }
  return z;
}

template <typename T>
FilmParams Separator<T>::film_parameters(const ConditioningVector& z) {
  check_conditioning(z);
  auto [g, b] = film_.forward(to_tensor<T>(z));
  return {std::vector<double>(g.data.begin(), g.data.end()), std::vector<double>(b.data.begin(), b.data.end())};
}

template <typename T>
typename Separator<T>::Prepared Separator<T>::prepare(const AudioClip& mixture) const {
  Prepared p;
  p.compressed = compress(stft(mixture, cfg_.stft));
  const int fbins = cfg_.unet.in_freq, frames = cfg_.unet.in_frames;
  if (p.compressed.frames < frames) throw Error("mixture chunk too short for the network input");
  p.input = Tensor<T>(1, 1, fbins, frames);
  for (int f = 0; f < fbins; ++f)
    for (int t = 0; t < frames; ++t) p.input.at(0, 0, f, t) = static_cast<T>(std::abs(p.compressed.at(f, t)));
  return p;
}

template <typename T>
ComplexMask Separator<T>::unet_forward(const ComplexSpectrogram& compressed, const ConditioningVector& z) {
  check_conditioning(z);
  const int fbins = cfg_.unet.in_freq, frames = cfg_.unet.in_frames;
  if (compressed.bins < fbins || compressed.frames < frames)
    throw Error("spectrogram " + std::to_string(compressed.bins) + "x" + std::to_string(compressed.frames) +
                " smaller than the network input " + std::to_string(fbins) + "x" + std::to_string(frames));
  Tensor<T> x(1, 1, fbins, frames);
  for (int f = 0; f < fbins; ++f)
    for (int t = 0; t < frames; ++t) x.at(0, 0, f, t) = static_cast<T>(std::abs(compressed.at(f, t)));
  auto [gamma, beta] = film_.forward(to_tensor<T>(z));
  const Tensor<T> raw = unet_.forward(x, gamma, beta, false);
  ComplexMask mask{fbins, frames, std::vector<std::complex<double>>(static_cast<std::size_t>(fbins) * frames)};
  for (int f = 0; f < fbins; ++f)
    for (int t = 0; t < frames; ++t) mask.data[static_cast<std::size_t>(f) * frames + t] = mask_value(raw.at(0, 0, f, t), raw.at(0, 1, f, t));
  return mask;
}

template <typename T>
AudioClip Separator<T>::separate_chunk(const AudioClip& mixture, const ConditioningVector& z) {
  if (mixture.sample_rate != cfg_.sample_rate)
    throw Error("separate_chunk expects " + std::to_string(cfg_.sample_rate) + " Hz input");
  const std::size_t n = cfg_.chunk_samples();
  if (mixture.size() > n) throw Error("separate_chunk input longer than one chunk");
  AudioClip padded(n, cfg_.sample_rate);
  std::copy(mixture.samples.begin(), mixture.samples.end(), padded.samples.begin());
  const Prepared p = prepare(padded);
  const ComplexMask mask = unet_forward(p.compressed, z);
  AudioClip out = reconstruct(p.compressed, mask);
  out.samples.resize(mixture.size());
  return out;
}

template <typename T>
Tensor<T> Separator<T>::conditioning_tensor(const std::vector<BatchItem>& batch, bool training) {
  const int b = static_cast<int>(batch.size());
  const int dim = cfg_.conditioning_dim();
  if (cfg_.mode == ConditioningMode::kClass) {
    Tensor<T> z(b, dim);
    for (int i = 0; i < b; ++i) {
      const int k = batch[i].class_index;
      if (k < 0 || k >= dim) throw Error("batch item has no valid class index");
      z.data[static_cast<std::size_t>(i) * dim + k] = T(1);
    }
    return z;
  }

  const bool neg = cfg_.mode == ConditioningMode::kFewShotNeg;
  std::vector<const MelFeatures*> feats;
  for (const auto& item : batch) {
    if (item.positives.empty()) throw Error("few-shot batch item has no positive examples");
    if (neg && item.negatives.empty()) throw Error("few-shot+neg batch item has no negative examples");
    for (const auto& f : item.positives) feats.push_back(&f);
  }
  if (neg)
    for (const auto& item : batch)
      for (const auto& f : item.negatives) feats.push_back(&f);
  const Tensor<T> emb = encoder_.forward(features_tensor<T>(feats), training);

  auto average = [&](bool negatives, int& row) {
    Tensor<T> z(b, dim);
    for (int i = 0; i < b; ++i) {
      const auto& list = negatives ? batch[i].negatives : batch[i].positives;
      const T inv = T(1) / static_cast<T>(list.size());
      for (std::size_t e = 0; e < list.size(); ++e, ++row)
        for (int d = 0; d < dim; ++d) z.data[static_cast<std::size_t>(i) * dim + d] += inv * emb.sample(row)[d];
    }
    return z;
  };
  int row = 0;
  Tensor<T> zp = average(false, row);
  if (!neg) return zp;
  Tensor<T> zn = average(true, row);
  return fusion_.forward(zp, zn);
}

template <typename T>
BatchLoss Separator<T>::run_batch(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg, bool training,
                                  bool backward) {
  if (batch.empty()) throw Error("empty batch");
  const int b = static_cast<int>(batch.size());
  const int fbins = cfg_.unet.in_freq, frames = cfg_.unet.in_frames;

  std::vector<ComplexSpectrogram> comp(static_cast<std::size_t>(b));
  Tensor<T> x(b, 1, fbins, frames);
  for (int i = 0; i < b; ++i) {
    if (batch[i].mixture.size() != batch[i].target.size()) throw Error("mixture/target length mismatch");
    Prepared p = prepare(batch[i].mixture);
    std::copy(p.input.data.begin(), p.input.data.end(), x.sample(i));
    comp[i] = std::move(p.compressed);
  }

  const Tensor<T> z = conditioning_tensor(batch, training);
  auto [gamma, beta] = film_.forward(z);
  const Tensor<T> raw = unet_.forward(x, gamma, beta, training);

  BatchLoss out;
  Tensor<T> g_raw;
  if (backward) g_raw = Tensor<T>(raw.n(), raw.c(), raw.h(), raw.w());
  const double scale = 1.0 / b;
  for (int i = 0; i < b; ++i) {
    ComplexMask mask{fbins, frames, std::vector<std::complex<double>>(static_cast<std::size_t>(fbins) * frames)};
    for (int f = 0; f < fbins; ++f)
      for (int t = 0; t < frames; ++t)
        mask.data[static_cast<std::size_t>(f) * frames + t] = mask_value(raw.at(i, 0, f, t), raw.at(i, 1, f, t));
    const AudioClip estimate = reconstruct(comp[i], mask);
    const ComplexSpectrogram ref_spec = stft(batch[i].target, cfg_.stft);
    std::vector<double> g_est;
    const LossBreakdown lb = total_loss_with_grad(estimate, batch[i].target, ref_spec, loss_cfg, scale, g_est);
    out.total += lb.total * scale;
    out.sdr_term += lb.sdr_term * scale;
    out.mag_mae_term += lb.mag_mae_term * scale;
    out.skipped_sdr += lb.sdr_skipped ? 1 : 0;
    if (!backward) continue;

    const auto g_spec = istft_adjoint(g_est, cfg_.stft, comp[i].frames);
    for (int f = 0; f < fbins; ++f)
      for (int t = 0; t < frames; ++t) {
        const std::size_t k = static_cast<std::size_t>(f) * comp[i].frames + t;
        const std::complex<double> c = comp[i].at(f, t);
        const std::complex<double> m = mask.data[static_cast<std::size_t>(f) * frames + t];
        const std::complex<double> g_y = decompress_vjp(m * c, g_spec[k]);
        const std::complex<double> g_m = g_y * std::conj(c);
        const auto g_ab = mask_value_vjp(raw.at(i, 0, f, t), raw.at(i, 1, f, t), g_m);
        g_raw.at(i, 0, f, t) = static_cast<T>(g_ab[0]);
        g_raw.at(i, 1, f, t) = static_cast<T>(g_ab[1]);
      }
  }
  if (!backward) return out;

  auto [g_gamma, g_beta] = unet_.backward(g_raw);
  const Tensor<T> g_z = film_.backward(g_gamma, g_beta);
  if (cfg_.mode == ConditioningMode::kClass) return out;

  const bool neg = cfg_.mode == ConditioningMode::kFewShotNeg;
  Tensor<T> g_zp, g_zn;
  if (neg) {
    std::tie(g_zp, g_zn) = fusion_.backward(g_z);
  } else {
    g_zp = g_z;
  }
  const int dim = cfg_.conditioning_dim();
  int rows = 0;
  for (const auto& item : batch) rows += static_cast<int>(item.positives.size() + (neg ? item.negatives.size() : 0));
  Tensor<T> g_emb(rows, dim);
  int row = 0;
  auto scatter = [&](const Tensor<T>& g, bool negatives) {
    for (int i = 0; i < b; ++i) {
      const auto& list = negatives ? batch[i].negatives : batch[i].positives;
      const T inv = T(1) / static_cast<T>(list.size());
      for (std::size_t e = 0; e < list.size(); ++e, ++row)
        for (int d = 0; d < dim; ++d) g_emb.sample(row)[d] = inv * g.data[static_cast<std::size_t>(i) * dim + d];
    }
  };
  scatter(g_zp, false);
  if (neg) scatter(g_zn, true);
  encoder_.backward(g_emb);
  return out;
}

template <typename T>
BatchLoss Separator<T>::forward_backward(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg) {
  return run_batch(batch, loss_cfg, true, true);
}

template <typename T>
BatchLoss Separator<T>::evaluate_loss(const std::vector<BatchItem>& batch, const LossConfig& loss_cfg) {
  return run_batch(batch, loss_cfg, false, false);
}

template <typename T>
void Separator<T>::recalibrate_batchnorm(const std::vector<std::vector<BatchItem>>& batches) {
  if (batches.empty()) throw Error("recalibrate_batchnorm: no batches");
  unet_.set_recalibration(true);
  if (cfg_.mode != ConditioningMode::kClass) encoder_.set_recalibration(true);
  for (const auto& b : batches) run_batch(b, LossConfig{}, true, false);
  unet_.set_recalibration(false);
  if (cfg_.mode != ConditioningMode::kClass) encoder_.set_recalibration(false);
}

template class Separator<float>;
template class Separator<double>;

}  // namespace fsmss
