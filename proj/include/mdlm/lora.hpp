// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fnmatch.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/tensor.hpp"

namespace mdlm {

struct LoraConfig {
  int rank = 8;
  double alpha = 8.0;
  double dropout = 0.1;
  /// Name patterns. A plain pattern matches a tensor whose last name
  /// component equals it ("W_q" matches "layers.0.attn.W_q"); patterns with
  /// '*' or '?' are matched against the full name as shell globs.
  std::vector<std::string> targets = {"W_q", "W_k", "W_v", "W_o", "W_up", "W_down"};

  double scaling() const { return alpha / static_cast<double>(rank); }

  void validate() const {
    if (rank < 1) throw Error("LoRA rank must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("LoRA dropout must be in [0, 1)");
    if (targets.empty()) throw Error("LoRA needs at least one target pattern");
  }
};

inline bool lora_target_matches(std::string_view pattern, std::string_view name) {
  if (pattern.find_first_of("*?[") != std::string_view::npos) {
    return fnmatch(std::string(pattern).c_str(), std::string(name).c_str(), 0) == 0;
  }
  if (name == pattern) return true;
  return name.size() > pattern.size() && name.ends_with(pattern) && name[name.size() - pattern.size() - 1] == '.';
}

inline std::string lora_a_name(const std::string& target) { return "lora.A." + target; }
inline std::string lora_b_name(const std::string& target) { return "lora.B." + target; }

/// Low-rank factors for every targeted weight W [in, out]:
/// A [r, in], B [out, r]; the adapted map is x W + scaling * (x A^T) B^T.
template <typename T>
struct LoraAdapter {
  LoraConfig config;
  std::vector<std::string> targets;
  TensorStore<T> tensors;

  T scaling() const { return static_cast<T>(config.scaling()); }

  const Matrix<T>* a(const std::string& target) const { return tensors.find(lora_a_name(target)); }
  const Matrix<T>* b(const std::string& target) const { return tensors.find(lora_b_name(target)); }
  bool targets_tensor(const std::string& name) const { return tensors.contains(lora_a_name(name)); }
};

/// Resolves the target patterns against `base` and creates fresh factors:
/// A ~ N(0, 1/sqrt(r)), B = 0.
template <typename T>
LoraAdapter<T> make_lora_adapter(const TensorStore<T>& base, const LoraConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  LoraAdapter<T> adapter;
  adapter.config = cfg;
  for (const auto& pattern : cfg.targets) {
    bool hit = false;
    for (const auto& [name, _] : base) hit = hit || lora_target_matches(pattern, name);
    if (!hit) throw Error("LoRA target pattern matches no tensor: " + pattern);
  }
  Rng rng(derive_seed(seed, {0x10a0}));
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  for (const auto& [name, w] : base) {
    bool hit = false;
    for (const auto& pattern : cfg.targets) hit = hit || lora_target_matches(pattern, name);
    if (!hit) continue;
    Matrix<T> a(cfg.rank, w.rows());
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
    adapter.targets.push_back(name);
    adapter.tensors.add(lora_a_name(name), std::move(a));
    adapter.tensors.add(lora_b_name(name), Matrix<T>::Zero(w.cols(), cfg.rank));
  }
  return adapter;
}

/// W += scaling * A^T B^T for each target.
template <typename T>
void merge_lora_into(TensorStore<T>& base, const LoraAdapter<T>& adapter) {
  const T s = adapter.scaling();
  for (const auto& target : adapter.targets) {
    base.at(target).noalias() += s * (adapter.a(target)->transpose() * adapter.b(target)->transpose());
  }
}

}  // namespace mdlm
