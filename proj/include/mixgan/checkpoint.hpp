#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "mixgan/models.hpp"
#include "mixgan/optimizer.hpp"
#include "mixgan/tensor.hpp"

namespace mixgan {

/// On-disk training snapshot. Layout:
///   8-byte magic | u32 version | u64 header length | header JSON | float64 data
/// The header lists every tensor with its shape and offset (in doubles)
/// into the data section; scalars and strings (RNG states, loader
/// position) live in the header itself. Multi-byte fields are
/// little-endian.
struct Checkpoint {
  std::int64_t iteration = 0;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> strings;
  std::map<std::string, std::int64_t> ints;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw DataError("checkpoint file is truncated");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["iteration"] = ck.iteration;
  header["ints"] = ck.ints;
  header["strings"] = ck.strings;
  nlohmann::json tensor_list = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    tensor_list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel();
  }
  header["tensors"] = tensor_list;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_le<std::uint32_t>(out, detail::kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, t] : ck.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(real_t))));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  char magic[sizeof(detail::kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != detail::kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  const auto header_len = detail::read_le<std::uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint file is truncated: " + path);

  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw DataError("corrupt checkpoint header: " + path);

  Checkpoint ck;
  try {
    ck.iteration = header.at("iteration").get<std::int64_t>();
    ck.ints = header.at("ints").get<std::map<std::string, std::int64_t>>();
    ck.strings = header.at("strings").get<std::map<std::string, std::string>>();
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      Tensor t(shape);
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(real_t))));
      if (!in) throw DataError("checkpoint file is truncated: " + path);
      ck.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
  }
  return ck;
}

/// Stores a module's parameters and buffers under `prefix.<registered name>`.
inline void pack_module(Checkpoint& ck, const std::string& prefix, Module& m) {
  for (const auto& p : m.parameters()) ck.tensors[prefix + "." + p.name] = p.var->val().clone();
  for (const auto& b : m.buffers()) ck.tensors[prefix + "." + b.name] = b.tensor->clone();
}

inline void unpack_module(const Checkpoint& ck, const std::string& prefix, Module& m) {
  auto fetch = [&](const std::string& name) -> const Tensor& {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw DataError("checkpoint is missing tensor " + name);
    return it->second;
  };
  for (const auto& p : m.parameters()) {
    const Tensor& stored = fetch(prefix + "." + p.name);
    check_shape(stored.shape() == p.var->shape(),
                "checkpoint tensor " + prefix + "." + p.name + " has mismatched shape");
    p.var->set_value(stored.clone());
  }
  for (const auto& b : m.buffers()) {
    const Tensor& stored = fetch(prefix + "." + b.name);
    check_shape(stored.shape() == b.tensor->shape(),
                "checkpoint tensor " + prefix + "." + b.name + " has mismatched shape");
    *b.tensor = stored.clone();
  }
}

inline void pack_adam(Checkpoint& ck, const std::string& prefix, const Adam& opt) {
  ck.ints[prefix + ".t"] = opt.t;
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    ck.tensors[prefix + ".m." + std::to_string(i)] = opt.m[i].clone();
    ck.tensors[prefix + ".v." + std::to_string(i)] = opt.v[i].clone();
  }
}

inline void unpack_adam(const Checkpoint& ck, const std::string& prefix, Adam& opt) {
  auto it = ck.ints.find(prefix + ".t");
  if (it == ck.ints.end()) throw DataError("checkpoint is missing " + prefix + ".t");
  opt.t = it->second;
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    const std::string mk = prefix + ".m." + std::to_string(i);
    const std::string vk = prefix + ".v." + std::to_string(i);
    auto mi = ck.tensors.find(mk);
    auto vi = ck.tensors.find(vk);
    if (mi == ck.tensors.end() || vi == ck.tensors.end()) {
      throw DataError("checkpoint is missing optimizer slot " + std::to_string(i) + " under " + prefix);
    }
    check_shape(mi->second.shape() == opt.m[i].shape() && vi->second.shape() == opt.v[i].shape(),
                "checkpoint optimizer slot " + std::to_string(i) + " has mismatched shape");
    opt.m[i] = mi->second.clone();
    opt.v[i] = vi->second.clone();
  }
}

}  // namespace mixgan
