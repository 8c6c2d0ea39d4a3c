#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosekit/model.hpp"

namespace mosekit::ckpt {

inline constexpr char kMagic[8] = {'M', 'O', 'S', 'E', 'C', 'K', 'P', '1'};

// Layout: 8-byte magic, little-endian u64 header length, JSON header
// {version, dtype, step, config, tensors: [{name, size}]}, then the raw
// tensor payloads in the same fixed parameter order used everywhere else.
template <typename T>
void save_checkpoint(const std::string& path, const model::ParamSet<T>& params,
                     long long step = 0) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  nlohmann::json tensors = nlohmann::json::array();
  const_cast<model::ParamSet<T>&>(params).for_each(
      [&](const std::string& name, T*, long sz) {
        tensors.push_back({{"name", name}, {"size", sz}});
      });
  nlohmann::json header = {{"version", 1},
                           {"dtype", std::is_same_v<T, float> ? "f32" : "f64"},
                           {"step", step},
                           {"config", params.cfg},
                           {"tensors", tensors}};
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  const_cast<model::ParamSet<T>&>(params).for_each([&](const std::string&, T* d, long sz) {
    f.write(reinterpret_cast<const char*>(d), static_cast<std::streamsize>(sz * sizeof(T)));
  });
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

// Loads into the requested scalar type, converting from the stored dtype if
// they differ. Same-dtype round trips are bit-exact.
template <typename T>
model::ParamSet<T> load_checkpoint(const std::string& path, long long* step = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  const nlohmann::json header = nlohmann::json::parse(hs);
  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported version");
  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != "f32" && dtype != "f64")
    throw std::runtime_error("load_checkpoint: unknown dtype '" + dtype + "'");
  if (step) *step = header.at("step").get<long long>();

  const EncoderConfig cfg = header.at("config").get<EncoderConfig>();
  model::ParamSet<T> params = model::ParamSet<T>::zeros(cfg);

  size_t ti = 0;
  const auto& tensors = header.at("tensors");
  params.for_each([&](const std::string& name, T* d, long sz) {
    if (ti >= tensors.size()) throw std::runtime_error("load_checkpoint: tensor list too short");
    const auto& entry = tensors[ti++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("size").get<long>() != sz)
      throw std::runtime_error("load_checkpoint: tensor mismatch at " + name);
    if (dtype == "f32") {
      std::vector<float> buf(sz);
      f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(sz * 4));
      for (long i = 0; i < sz; ++i) d[i] = static_cast<T>(buf[i]);
    } else {
      std::vector<double> buf(sz);
      f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(sz * 8));
      for (long i = 0; i < sz; ++i) d[i] = static_cast<T>(buf[i]);
    }
  });
  if (ti != tensors.size()) throw std::runtime_error("load_checkpoint: tensor list too long");
  if (!f) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
  return params;
}

}  // namespace mosekit::ckpt
