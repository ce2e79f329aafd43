#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vbb/agent/train.hpp"
#include "vbb/harness/config.hpp"

namespace vbb::harness {

inline constexpr char kCheckpointMagic[4] = {'V', 'B', 'B', '1'};
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::uint64_t frames = 0;
  std::uint64_t updates = 0;
  double train_success = 0.0;
  std::uint64_t adam_step = 0;
  std::vector<RngStream::State> rng;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;
};

/// Snapshot of a trainer's parameters, optimizer moments and random streams.
inline Checkpoint capture(const ExperimentConfig& config, std::uint64_t seed, agent::Trainer& trainer) {
  Checkpoint ck;
  ck.config = config;
  ck.seed = seed;
  ck.frames = trainer.frames();
  ck.updates = trainer.updates();
  ck.train_success = trainer.recent_success();
  ck.adam_step = trainer.optimizer().adam_step();
  for (RngStream* r : trainer.rng_streams()) ck.rng.push_back(r->state());
  for (const auto& p : trainer.net().params()) ck.params.push_back({p.name, p.value});
  for (auto& [name, t] : trainer.optimizer().state_tensors(trainer.net().params())) ck.optimizer.push_back({name, *t});
  return ck;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline json tensor_entry(const NamedTensor& t, const char* group) {
  return json{{"name", t.name}, {"shape", t.value.shape()}, {"group", group}};
}

// Copies tensors into `dst` by name, checking the set of names and shapes.
inline void assign_by_name(const std::vector<NamedTensor>& src, const std::vector<std::pair<std::string, Tensor*>>& dst,
                           const char* what) {
  if (src.size() != dst.size()) {
    throw ConfigError("checkpoint", std::string(what) + " count mismatch: checkpoint has " + std::to_string(src.size()) +
                                        ", model has " + std::to_string(dst.size()));
  }
  for (const auto& [name, tensor] : dst) {
    const NamedTensor* found = nullptr;
    for (const auto& s : src)
      if (s.name == name) found = &s;
    if (!found) throw ConfigError("checkpoint", std::string(what) + " '" + name + "' missing from checkpoint");
    if (found->value.shape() != tensor->shape()) {
      throw ConfigError("checkpoint", std::string(what) + " '" + name + "' has an incompatible shape");
    }
  }
  for (const auto& [name, tensor] : dst)
    for (const auto& s : src)
      if (s.name == name) *tensor = s.value;
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["config"] = to_json(ck.config);
  meta["seed"] = ck.seed;
  meta["frames"] = ck.frames;
  meta["updates"] = ck.updates;
  meta["train_success"] = ck.train_success;
  meta["adam_step"] = ck.adam_step;
  json rng = json::array();
  for (const auto& s : ck.rng) rng.push_back({s.seed, s.stream, s.counter});
  meta["rng"] = rng;
  json tensors = json::array();
  for (const auto& t : ck.params) tensors.push_back(detail::tensor_entry(t, "param"));
  for (const auto& t : ck.optimizer) tensors.push_back(detail::tensor_entry(t, "optimizer"));
  meta["tensors"] = tensors;
  const std::string text = meta.dump();

  std::string out(kCheckpointMagic, 4);
  detail::put_u64(out, text.size());
  out += text;
  for (const auto* group : {&ck.params, &ck.optimizer})
    for (const auto& t : *group)
      for (double v : t.value.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

/// Parses a checkpoint image; nothing is returned unless the whole file is
/// well formed.
inline Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < 12) throw CorruptFileError("checkpoint header truncated", bytes.size());
  if (bytes.compare(0, 4, kCheckpointMagic, 4) != 0) throw CorruptFileError("bad checkpoint magic", 0);
  const std::uint64_t meta_len = detail::get_u64(bytes, 4);
  if (meta_len > bytes.size() - 12) throw CorruptFileError("checkpoint metadata truncated", bytes.size());

  json meta;
  try {
    meta = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const json::parse_error& e) {
    throw CorruptFileError(std::string("malformed checkpoint metadata: ") + e.what(), 12 + e.byte);
  }

  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> params, opt;
  try {
    if (meta.at("format_version").get<int>() != kCheckpointVersion) {
      throw CorruptFileError("unsupported checkpoint version " + meta.at("format_version").dump(), 12);
    }
    ck.config = config_from_json(meta.at("config"));
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.frames = meta.at("frames").get<std::uint64_t>();
    ck.updates = meta.at("updates").get<std::uint64_t>();
    ck.train_success = meta.at("train_success").get<double>();
    ck.adam_step = meta.at("adam_step").get<std::uint64_t>();
    for (const auto& r : meta.at("rng")) {
      ck.rng.push_back({r.at(0).get<std::uint64_t>(), r.at(1).get<std::uint64_t>(), r.at(2).get<std::uint64_t>()});
    }
    for (const auto& t : meta.at("tensors")) {
      auto entry = std::make_pair(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
      const std::string group = t.at("group").get<std::string>();
      if (group == "param") {
        params.push_back(std::move(entry));
      } else if (group == "optimizer") {
        opt.push_back(std::move(entry));
      } else {
        throw CorruptFileError("unknown tensor group '" + group + "'", 12);
      }
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("invalid checkpoint metadata: ") + e.what(), 12);
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("invalid configuration in checkpoint: ") + e.what(), 12);
  }

  std::size_t offset = 12 + meta_len;
  auto read_group = [&](const std::vector<std::pair<std::string, Shape>>& entries, std::vector<NamedTensor>& dst) {
    for (const auto& [name, shape] : entries) {
      std::size_t n = 1;
      for (std::size_t d : shape) n *= d;
      if (bytes.size() - offset < 8 * n) {
        throw CorruptFileError("checkpoint payload truncated in tensor '" + name + "'", bytes.size());
      }
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i, offset += 8) values[i] = std::bit_cast<double>(detail::get_u64(bytes, offset));
      dst.push_back({name, Tensor(shape, std::move(values))});
    }
  };
  read_group(params, ck.params);
  read_group(opt, ck.optimizer);
  if (offset != bytes.size()) throw CorruptFileError("unexpected trailing bytes after checkpoint payload", offset);
  return ck;
}

/// Writes via a temporary file and rename so readers never see partial files.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    const std::string bytes = serialize(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint", "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// Rebuilds the policy network stored in a checkpoint.
inline std::unique_ptr<agent::PolicyNet> make_net(const Checkpoint& ck) {
  auto net = std::make_unique<agent::PolicyNet>(agent_spec(ck.config).net, ck.seed);
  std::vector<std::pair<std::string, Tensor*>> dst;
  for (auto& p : net->params()) dst.emplace_back(p.name, &p.value);
  detail::assign_by_name(ck.params, dst, "parameter");
  return net;
}

/// Restores parameters, optimizer moments, random streams and counters.
inline void restore(const Checkpoint& ck, agent::Trainer& trainer) {
  std::vector<std::pair<std::string, Tensor*>> dst;
  for (auto& p : trainer.net().params()) dst.emplace_back(p.name, &p.value);
  detail::assign_by_name(ck.params, dst, "parameter");
  detail::assign_by_name(ck.optimizer, trainer.optimizer().state_tensors(trainer.net().params()), "optimizer state");
  trainer.optimizer().set_adam_step(ck.adam_step);
  auto streams = trainer.rng_streams();
  if (streams.size() != ck.rng.size()) throw ConfigError("checkpoint", "random stream count mismatch");
  for (std::size_t i = 0; i < streams.size(); ++i) *streams[i] = RngStream(ck.rng[i]);
  trainer.set_frames(ck.frames, ck.updates);
}

}  // namespace vbb::harness
