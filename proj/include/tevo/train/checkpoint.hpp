#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tevo/model/model.hpp"
#include "tevo/train/adam.hpp"

namespace tevo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: magic "TEVO", u32 version, u32 config hash, u32 tensor
// count; per tensor u16 name length, the UTF-8 name, u8 rank, u32 extents,
// then 32-bit little-endian IEEE-754 values. Tensor order: trainable
// parameters in registry order, frozen rotation factors, Adam moments
// (adam.m.<name>, adam.v.<name>), the step counter ("train.step") and the
// byte-encoded config snapshot ("__config__").
struct RawTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct RawCheckpoint {
  std::uint32_t version = 0;
  std::uint32_t config_hash = 0;
  std::vector<RawTensor> tensors;
  std::unordered_map<std::string, std::size_t> index;

  const RawTensor* find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? nullptr : &tensors[it->second];
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw std::runtime_error("checkpoint: file truncated or corrupt");
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v = 0;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline void append_tensor(std::string& out, const std::string& name,
                          const Shape& shape, const std::vector<float>& values) {
  if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long");
  if (shape.size() > 0xff) throw std::invalid_argument("checkpoint: rank too large");
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out.append(name);
  out.push_back(static_cast<char>(shape.size()));
  for (std::int64_t e : shape) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : values) put_f32(out, v);
}

template <typename S>
std::vector<float> to_f32(const std::vector<S>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const AdamState<S>* adam, std::int64_t step,
                     const std::string& config_json) {
  std::string out;
  out.append("TEVO");
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, model.cfg.hash());
  std::uint32_t count = static_cast<std::uint32_t>(model.registry.params().size() +
                                                   model.registry.frozen().size());
  if (adam != nullptr) count += 2 * static_cast<std::uint32_t>(adam->slots.size());
  count += 2;  // train.step and __config__
  detail::put_u32(out, count);

  for (const auto& [name, t] : model.registry.params()) {
    detail::append_tensor(out, name, t.shape(), detail::to_f32(t.values()));
  }
  for (const auto& [name, t] : model.registry.frozen()) {
    detail::append_tensor(out, name, t.shape(), detail::to_f32(t.values()));
  }
  if (adam != nullptr) {
    for (std::size_t i = 0; i < adam->slots.size(); ++i) {
      const auto& [name, t] = model.registry.params()[i];
      detail::append_tensor(out, "adam.m." + name, t.shape(),
                            detail::to_f32(adam->slots[i].m));
      detail::append_tensor(out, "adam.v." + name, t.shape(),
                            detail::to_f32(adam->slots[i].v));
    }
  }
  detail::append_tensor(out, "train.step", {1}, {static_cast<float>(step)});
  std::vector<float> cfg_bytes(config_json.size());
  for (std::size_t i = 0; i < config_json.size(); ++i) {
    cfg_bytes[i] = static_cast<float>(static_cast<unsigned char>(config_json[i]));
  }
  detail::append_tensor(out, "__config__",
                        {static_cast<std::int64_t>(cfg_bytes.size())}, cfg_bytes);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline RawCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  detail::ByteReader r{buf};
  if (r.bytes(4) != "TEVO") {
    throw std::runtime_error("checkpoint: bad magic (not a TEVO checkpoint)");
  }
  RawCheckpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(ck.version));
  }
  ck.config_hash = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    const std::uint16_t name_len = r.u16();
    t.name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    std::int64_t size = 1;
    for (std::uint8_t a = 0; a < rank; ++a) {
      const std::uint32_t e = r.u32();
      t.shape.push_back(static_cast<std::int64_t>(e));
      size *= e;
    }
    t.values.resize(static_cast<std::size_t>(size));
    for (auto& v : t.values) v = r.f32();
    ck.index[t.name] = ck.tensors.size();
    ck.tensors.push_back(std::move(t));
  }
  if (r.pos != buf.size()) {
    throw std::runtime_error("checkpoint: trailing bytes (corrupt file)");
  }
  return ck;
}

inline std::string checkpoint_config_json(const RawCheckpoint& ck) {
  const RawTensor* t = ck.find("__config__");
  if (t == nullptr) throw std::runtime_error("checkpoint: missing config snapshot");
  std::string s(t->values.size(), '\0');
  for (std::size_t i = 0; i < t->values.size(); ++i) {
    s[i] = static_cast<char>(static_cast<unsigned char>(t->values[i]));
  }
  return s;
}

inline std::int64_t checkpoint_step(const RawCheckpoint& ck) {
  const RawTensor* t = ck.find("train.step");
  if (t == nullptr || t->values.empty()) {
    throw std::runtime_error("checkpoint: missing step counter");
  }
  return static_cast<std::int64_t>(t->values[0]);
}

template <typename S>
void restore_model(Model<S>& model, const RawCheckpoint& ck) {
  const std::uint32_t expect = model.cfg.hash();
  if (ck.config_hash != expect) {
    throw std::runtime_error(
        "checkpoint: config hash mismatch (checkpoint " +
        std::to_string(ck.config_hash) + ", model " + std::to_string(expect) + ")");
  }
  // Registry tensors are shared handles into the model structures, so
  // writing through a copied handle updates the layers in place.
  auto restore_into = [&](const std::string& name, Tensor<S> t) {
    const RawTensor* raw = ck.find(name);
    if (raw == nullptr) throw std::runtime_error("checkpoint: missing tensor " + name);
    if (raw->shape != t.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    auto& dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<S>(raw->values[i]);
  };
  for (const auto& [name, t] : model.registry.params()) restore_into(name, t);
  for (const auto& [name, t] : model.registry.frozen()) restore_into(name, t);
}

template <typename S>
void restore_adam(AdamState<S>& adam, const Model<S>& model, const RawCheckpoint& ck,
                  std::int64_t step) {
  adam = AdamState<S>::init(model.registry);
  for (std::size_t i = 0; i < adam.slots.size(); ++i) {
    const std::string& name = model.registry.params()[i].first;
    const RawTensor* m = ck.find("adam.m." + name);
    const RawTensor* v = ck.find("adam.v." + name);
    if (m == nullptr || v == nullptr) {
      throw std::runtime_error("checkpoint: missing optimizer moments for " + name);
    }
    for (std::size_t j = 0; j < adam.slots[i].m.size(); ++j) {
      adam.slots[i].m[j] = static_cast<S>(m->values[j]);
      adam.slots[i].v[j] = static_cast<S>(v->values[j]);
    }
  }
  adam.step = step;
}

}  // namespace tevo
