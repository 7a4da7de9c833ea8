#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mtseg/nn/unet.hpp"

namespace mtseg {

/// Checkpoint layout: 8-byte magic, 8-byte little-endian header length, JSON
/// header (config, step, array index), then the arrays' raw data in header
/// order. Writes go to a temp file renamed into place.
inline constexpr char kCheckpointMagic[8] = {'M', 'T', 'S', 'E', 'G', 'C', 'K', '1'};

template <typename T>
void save_checkpoint(const ModelParams<T>& params, long step,
                     const std::string& path) {
  nlohmann::json header;
  header["format"] = 1;
  header["step"] = step;
  header["config"] = {{"depth", params.config.depth},
                      {"base_filters", params.config.base_filters},
                      {"in_channels", params.config.in_channels},
                      {"num_classes", params.config.num_classes}};
  header["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  auto& arrs = header["arrays"] = nlohmann::json::array();
  for (const auto& [key, t] : params.arrays) {
    arrs.push_back({{"name", key},
                    {"shape", {t.n(), t.h(), t.w(), t.c()}}});
  }
  const std::string hs = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    out.write(kCheckpointMagic, 8);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [key, t] : params.arrays)
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  long step = 0;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  const auto header = nlohmann::json::parse(hs);

  const std::string want_dtype = sizeof(T) == 4 ? "f32" : "f64";
  if (header.at("dtype").get<std::string>() != want_dtype)
    throw std::runtime_error("load_checkpoint: dtype " +
                             header.at("dtype").get<std::string>() +
                             " does not match requested " + want_dtype);

  Checkpoint<T> ck;
  ck.step = header.at("step").get<long>();
  const auto& c = header.at("config");
  ck.params.config = {c.at("depth").get<int>(), c.at("base_filters").get<int>(),
                      c.at("in_channels").get<int>(), c.at("num_classes").get<int>()};

  for (const auto& a : header.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    const auto sh = a.at("shape");
    Tensor<T> t(sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>(),
                sh.at(3).get<int>());
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated data for " + name);
    ck.params.arrays[name] = std::move(t);
  }

  // the stored key set and shapes must be exactly what the config dictates
  Rng probe(0);
  const ModelParams<T> expect = build<T>(ck.params.config, probe);
  if (!ck.params.same_structure(expect))
    throw std::runtime_error("load_checkpoint: arrays in " + path +
                             " do not match the header config");
  return ck;
}

}  // namespace mtseg
