// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/nn/model.hpp"

namespace tv::nn {

// Layout (little-endian):
//   "TVCKPT\0\0" | u32 version | u32 config_len | config JSON
//   | u32 n_params | per param: u32 name_len | name | u32 rank | i64 dims... | f32 payload
inline constexpr std::string_view kCheckpointMagic{"TVCKPT\0\0", 8};
inline constexpr uint32_t kCheckpointVersion = 1;

inline std::string checkpoint_config_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["variant"] = cfg.flags.name();
  j["use_year"] = cfg.flags.use_year;
  j["use_trends"] = cfg.flags.use_trends;
  j["n_subreddits"] = cfg.n_subreddits;
  j["seed"] = cfg.seed;
  j["base_year"] = cfg.base_year;
  return j.dump();
}

inline std::string encode_checkpoint(const ViralityNet& net) {
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put(kCheckpointVersion);
  const std::string cfg = checkpoint_config_json(net.config());
  w.put(static_cast<uint32_t>(cfg.size()));
  w.put_bytes(cfg);
  const auto params = net.params().all();
  w.put(static_cast<uint32_t>(params.size()));
  std::vector<float> buf;
  for (const Tensor* t : params) {
    w.put(static_cast<uint32_t>(t->name.size()));
    w.put_bytes(t->name);
    w.put(static_cast<uint32_t>(t->shape.size()));
    for (int64_t d : t->shape) w.put(d);
    buf.assign(t->value.data(), t->value.data() + t->value.size());
    w.put_floats(buf);
  }
  return w.take();
}

inline ViralityNet decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  ByteReader r(bytes, what);
  if (r.get_bytes(kCheckpointMagic.size()) != kCheckpointMagic) r.fail("bad magic");
  if (r.get<uint32_t>() != kCheckpointVersion) r.fail("unsupported version");
  const auto cfg_len = r.get<uint32_t>();
  ModelConfig cfg;
  try {
    const auto j = nlohmann::json::parse(r.get_bytes(cfg_len));
    cfg.flags.use_year = j.at("use_year").get<bool>();
    cfg.flags.use_trends = j.at("use_trends").get<bool>();
    cfg.n_subreddits = j.at("n_subreddits").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.base_year = j.at("base_year").get<int>();
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("config echo: ") + e.what());
  }
  ViralityNet net(cfg);
  auto params = net.params().all();
  if (r.get<uint32_t>() != params.size()) r.fail("parameter count mismatch");
  std::vector<float> buf;
  for (Tensor* t : params) {
    const auto len = r.get<uint32_t>();
    if (r.get_bytes(len) != t->name) r.fail("expected parameter '" + t->name + "'");
    if (r.get<uint32_t>() != t->shape.size()) r.fail("rank mismatch for '" + t->name + "'");
    for (int64_t d : t->shape)
      if (r.get<int64_t>() != d) r.fail("shape mismatch for '" + t->name + "'");
    buf.resize(static_cast<size_t>(t->numel()));
    r.get_floats(buf);
    for (size_t i = 0; i < buf.size(); ++i) t->value.data()[i] = buf[i];
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return net;
}

inline void save_checkpoint(const fs::path& path, const ViralityNet& net) { write_file(path, encode_checkpoint(net)); }

inline ViralityNet load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DependencyError("checkpoint '" + path.string() + "' does not exist");
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace tv::nn
