// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/config.hpp"
#include "mdlm/model.hpp"
#include "mdlm/tensor.hpp"
#include "mdlm/trainer.hpp"

// Layout:
//   "MDLM" | version u32 LE | header length u64 LE | header text | tensor data
// The header is settings text with the model/lora/train/optimizer sections
// and a [tensors] directory of `name=f32 <rows>x<cols> <byte offset>`.
// Tensor data is raw little-endian float32, in directory order, with offsets
// relative to the end of the header.

namespace mdlm {

inline constexpr std::array<char, 4> kCheckpointMagic = {'M', 'D', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::string dtype = "f32";
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::uint64_t offset = 0;

  std::uint64_t bytes() const { return static_cast<std::uint64_t>(rows * cols) * 4; }
};

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  Settings settings;  // everything except the tensor directory
  std::vector<TensorEntry> tensors;
  std::string text;   // header exactly as stored

  const TensorEntry* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

struct LoadedCheckpoint {
  CheckpointHeader header;
  TensorStore<float> tensors;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t read_le(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline TensorEntry parse_entry(const std::string& name, const std::string& spec) {
  TensorEntry e;
  e.name = name;
  std::istringstream is(spec);
  std::string shape;
  if (!(is >> e.dtype >> shape >> e.offset)) throw Error("malformed tensor directory entry for " + name);
  if (e.dtype != "f32") throw Error("unsupported dtype '" + e.dtype + "' for tensor " + name);
  const auto x = shape.find('x');
  if (x == std::string::npos) throw Error("malformed shape for tensor " + name);
  e.rows = std::stoll(shape.substr(0, x));
  e.cols = std::stoll(shape.substr(x + 1));
  return e;
}

inline CheckpointHeader parse_header(std::string text, std::uint32_t version) {
  CheckpointHeader h;
  h.version = version;
  h.settings = parse_settings(text);
  if (auto dir = h.settings.get_child_optional("tensors")) {
    for (const auto& [name, node] : *dir) h.tensors.push_back(parse_entry(name, node.data()));
    h.settings.erase("tensors");
  }
  h.text = std::move(text);
  return h;
}

}  // namespace detail

/// Writes every named tensor as float32. `settings` carries the config
/// sections; the tensor directory is appended to it.
template <typename T>
void write_checkpoint(const std::string& path, const Settings& settings,
                      const std::vector<std::pair<std::string, const Matrix<T>*>>& tensors) {
  std::ostringstream dir;
  dir << "[tensors]\n";
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    dir << name << "=f32 " << m->rows() << 'x' << m->cols() << ' ' << offset << '\n';
    offset += static_cast<std::uint64_t>(m->size()) * 4;
  }
  Settings head = settings;
  head.erase("tensors");
  const std::string header = dump_settings(head) + dir.str();

  const auto tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint: " + path);
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::vector<char> buf;
    for (const auto& [name, m] : tensors) {
      buf.resize(static_cast<std::size_t>(m->size()) * 4);
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m->data()[i]));
        for (int b = 0; b < 4; ++b) buf[static_cast<std::size_t>(i) * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      }
      os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw Error("failed while writing checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

/// Reads the header only; tensor data is not touched.
inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  std::array<unsigned char, 16> pre{};
  is.read(reinterpret_cast<char*>(pre.data()), pre.size());
  if (is.gcount() < 4 || std::memcmp(pre.data(), kCheckpointMagic.data(), 4) != 0) {
    throw Error("not a checkpoint (bad magic): " + path);
  }
  if (is.gcount() < 16) throw Error("truncated checkpoint preamble: " + path);
  const auto version = static_cast<std::uint32_t>(detail::read_le(pre.data() + 4, 4));
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto len = detail::read_le(pre.data() + 8, 8);
  const auto file_size = std::filesystem::file_size(path);
  if (len > file_size - 16) throw Error("truncated checkpoint header: " + path);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  return detail::parse_header(std::move(text), version);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  LoadedCheckpoint out;
  out.header = read_checkpoint_header(path);
  const std::uint64_t data_start = 16 + out.header.text.size();
  const auto file_size = std::filesystem::file_size(path);
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> buf;
  for (const auto& e : out.header.tensors) {
    const std::uint64_t begin = data_start + e.offset;
    if (begin + e.bytes() > file_size) {
      throw Error("truncated checkpoint: tensor '" + e.name + "' needs bytes up to " +
                  std::to_string(begin + e.bytes()) + " but the file has " + std::to_string(file_size));
    }
    buf.resize(e.bytes());
    is.seekg(static_cast<std::streamoff>(begin));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw Error("failed to read tensor '" + e.name + "'");
    Matrix<float> m(e.rows, e.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(detail::read_le(buf.data() + i * 4, 4)));
    }
    out.tensors.add(e.name, std::move(m));
  }
  return out;
}

inline std::string opt_m_name(const std::string& n) { return "opt.m." + n; }
inline std::string opt_v_name(const std::string& n) { return "opt.v." + n; }

/// Model (plus adapter and optimizer state when present) to a checkpoint.
/// `extra` supplies further sections such as [train] or [data].
template <typename T>
void save_checkpoint(const std::string& path, const Encoder<T>& model, const OptimizerState<T>* opt,
                     const Settings& extra = {}) {
  Settings s = extra;
  put_model_config(s, model.config());
  std::vector<std::pair<std::string, const Matrix<T>*>> tensors;
  for (const auto& [name, m] : model.parameters()) tensors.emplace_back(name, &m);
  if (const auto* a = model.adapter()) {
    put_lora_config(s, a->config);
    for (const auto& [name, m] : a->tensors) tensors.emplace_back(name, &m);
  }
  if (opt) {
    put_setting(s, "optimizer", "step", opt->step);
    put_setting(s, "optimizer", "updates", opt->updates);
    for (const auto& [name, m] : opt->m) tensors.emplace_back(opt_m_name(name), &m);
    for (const auto& [name, m] : opt->v) tensors.emplace_back(opt_v_name(name), &m);
  }
  write_checkpoint<T>(path, s, tensors);
}

template <typename T>
Encoder<T> encoder_from_checkpoint(const LoadedCheckpoint& ckpt) {
  const ModelConfig cfg = model_config_from(ckpt.header.settings);
  ModelParameters<T> params;
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.starts_with("lora.") || name.starts_with("opt.")) continue;
    params.add(name, m.template cast<T>());
  }
  Encoder<T> model(cfg, std::move(params));
  if (ckpt.header.settings.get_child_optional("lora")) {
    LoraAdapter<T> a;
    a.config = lora_config_from(ckpt.header.settings);
    for (const auto& [name, m] : ckpt.tensors) {
      if (!name.starts_with("lora.A.")) continue;
      const std::string target = name.substr(7);
      const auto* b = ckpt.tensors.find(lora_b_name(target));
      if (!b) throw Error("checkpoint adapter is missing " + lora_b_name(target));
      a.targets.push_back(target);
      a.tensors.add(name, m.template cast<T>());
      a.tensors.add(lora_b_name(target), b->template cast<T>());
    }
    model.set_adapter(std::move(a));
  }
  return model;
}

/// Optimizer state stored alongside the model, or a fresh state for the
/// model's trainable tensors when the checkpoint has none.
template <typename T>
OptimizerState<T> optimizer_from_checkpoint(const LoadedCheckpoint& ckpt, const Encoder<T>& model) {
  OptimizerState<T> st = OptimizerState<T>::for_gradients(model.zero_gradients());
  if (!ckpt.header.settings.get_child_optional("optimizer")) return st;
  st.step = get_setting<std::int64_t>(ckpt.header.settings, "optimizer", "step", 0);
  st.updates = get_setting<std::int64_t>(ckpt.header.settings, "optimizer", "updates", 0);
  for (const auto& name : model.trainable_names()) {
    const auto* m = ckpt.tensors.find(opt_m_name(name));
    const auto* v = ckpt.tensors.find(opt_v_name(name));
    if (!m || !v) throw Error("checkpoint optimizer state is missing tensor " + name);
    st.m.at(name) = m->template cast<T>();
    st.v.at(name) = v->template cast<T>();
  }
  return st;
}

}  // namespace mdlm
