// SPDX-License-Identifier: Apache-2.0
#include "fsmss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "fsmss/config.hpp"

namespace fsmss {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'F', 'S', 'M', 'S', 'S', 'C', 'K', 'P'};

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw Error("checkpoint truncated while reading " + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

json meta_json(const TrainingMeta& m) {
  return {{"step", m.step},
          {"best_step", m.best_step},
          {"best_validation", std::isfinite(m.best_validation) ? json(m.best_validation) : json(nullptr)},
          {"stale_validations", m.stale_validations},
          {"optimizer_steps", m.optimizer_steps},
          {"rng_state", m.rng_state}};
}

TrainingMeta meta_from_json(const json& j) {
  TrainingMeta m;
  m.step = j.at("step").get<long>();
  m.best_step = j.at("best_step").get<long>();
  if (!j.at("best_validation").is_null()) m.best_validation = j.at("best_validation").get<double>();
  m.stale_validations = j.at("stale_validations").get<int>();
  m.optimizer_steps = j.at("optimizer_steps").get<long>();
  m.rng_state = j.at("rng_state").get<std::string>();
  return m;
}

bool is_optimizer_tensor(const std::string& name) { return name.rfind("adam.", 0) == 0; }

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json header;
  header["config"] = ckpt.config;
  header["meta"] = meta_json(ckpt.meta);
  json list = json::array();
  for (const auto& [name, t] : ckpt.tensors) list.push_back({{"name", name}, {"shape", t.shape}});
  header["tensors"] = list;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors)
      for (float v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    if (!out) throw Error("failed writing checkpoint: " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error(path.string() + " is not a checkpoint file");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get_le<std::uint32_t>(in, "header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) throw Error("checkpoint truncated in header");

  Checkpoint ckpt;
  json header;
  try {
    header = json::parse(text);
    ckpt.config = header.at("config").get<SeparatorConfig>();
    ckpt.meta = meta_from_json(header.at("meta"));
  } catch (const json::exception& e) {
    throw Error(std::string("corrupt checkpoint header: ") + e.what());
  }
  ckpt.config.validate();

  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::array<int, 4>>();
    for (int d : shape)
      if (d < 0) throw Error("checkpoint tensor '" + name + "' has a negative dimension");
    Tensor<float> t(shape[0], shape[1], shape[2], shape[3]);
    for (auto& v : t.data) v = std::bit_cast<float>(get_le<std::uint32_t>(in, "tensor '" + name + "'"));
    ckpt.tensors.emplace(name, std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint has trailing bytes");

  // Shape validation against the architecture.
  Separator<float> probe(ckpt.config);
  auto refs = probe.parameters();
  std::set<std::string> expected;
  for (auto* p : refs.params) expected.insert(p->name);
  for (auto& b : refs.buffers) expected.insert(b.name);
  for (const auto& [name, t] : ckpt.tensors) {
    const std::string base = is_optimizer_tensor(name) ? name.substr(name.find('/') + 1) : name;
    if (!expected.count(base))
      throw Error("checkpoint tensor '" + name + "' does not belong to a " + to_string(ckpt.config.mode) + " model");
  }
  probe.load_state(ckpt.tensors);
  for (auto* p : refs.params)
    for (const char* prefix : {"adam.m/", "adam.v/"})
      if (const auto it = ckpt.tensors.find(prefix + p->name); it != ckpt.tensors.end() && it->second.shape != p->value.shape)
        throw Error("optimizer tensor '" + it->first + "' has the wrong shape");
  return ckpt;
}

template <typename T>
Checkpoint make_checkpoint(Separator<T>& model, const TrainingMeta& meta) {
  return {model.config(), meta, model.state()};
}

template <typename T>
Separator<T> instantiate(const Checkpoint& ckpt) {
  Separator<T> model(ckpt.config);
  model.load_state(ckpt.tensors);
  return model;
}

template Checkpoint make_checkpoint<float>(Separator<float>&, const TrainingMeta&);
template Checkpoint make_checkpoint<double>(Separator<double>&, const TrainingMeta&);
template Separator<float> instantiate<float>(const Checkpoint&);
template Separator<double> instantiate<double>(const Checkpoint&);

}  // namespace fsmss
