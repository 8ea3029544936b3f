// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/eval.hpp"
#include "mdlm/generator.hpp"
#include "mdlm/lora.hpp"
#include "mdlm/model.hpp"
#include "mdlm/trainer.hpp"

namespace mdlm {

/// Sectioned key/value settings ("[section]" headers, "key=value" lines).
using Settings = boost::property_tree::ptree;

inline Settings::path_type settings_path(std::string_view section, std::string_view key) {
  return Settings::path_type(std::string(section) + '/' + std::string(key), '/');
}

inline Settings parse_settings(const std::string& text) {
  Settings s;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, s);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("malformed settings: ") + e.what());
  }
  return s;
}

inline Settings load_settings(const std::string& path) {
  Settings s;
  try {
    boost::property_tree::ini_parser::read_ini(path, s);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("cannot read settings: ") + e.what());
  }
  return s;
}

inline std::string dump_settings(const Settings& s) {
  std::ostringstream os;
  boost::property_tree::ini_parser::write_ini(os, s);
  return os.str();
}

/// Copies every key of `top` over `base`, section by section.
inline void overlay(Settings& base, const Settings& top) {
  for (const auto& [section, keys] : top) {
    for (const auto& [key, value] : keys) base.put(settings_path(section, key), value.data());
  }
}

template <typename V>
std::string format_value(const V& v) {
  if constexpr (std::is_same_v<V, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_arithmetic_v<V>) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  } else {
    return std::string(v);
  }
}

template <typename V>
V parse_value(const std::string& s, std::string_view what) {
  if constexpr (std::is_same_v<V, bool>) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("expected a boolean for " + std::string(what) + ", got '" + s + "'");
  } else if constexpr (std::is_arithmetic_v<V>) {
    V v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw Error("invalid value for " + std::string(what) + ": '" + s + "'");
    }
    return v;
  } else {
    return V(s);
  }
}

template <typename V>
void put_setting(Settings& s, std::string_view section, std::string_view key, const V& v) {
  s.put(settings_path(section, key), format_value(v));
}

template <typename V>
V get_setting(const Settings& s, std::string_view section, std::string_view key, const V& fallback) {
  auto node = s.get_optional<std::string>(settings_path(section, key));
  if (!node) return fallback;
  return parse_value<V>(*node, std::string(section) + "." + std::string(key));
}

inline bool has_setting(const Settings& s, std::string_view section, std::string_view key) {
  return static_cast<bool>(s.get_optional<std::string>(settings_path(section, key)));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

// --- model ---------------------------------------------------------------

inline void put_model_config(Settings& s, const ModelConfig& c) {
  put_setting(s, "model", "n_layers", c.n_layers);
  put_setting(s, "model", "d_model", c.d_model);
  put_setting(s, "model", "n_heads", c.n_heads);
  put_setting(s, "model", "d_ffn", c.d_ffn);
  put_setting(s, "model", "vocab_size", c.vocab_size);
  put_setting(s, "model", "max_positions", c.max_positions);
  put_setting(s, "model", "seed", c.seed);
  put_setting(s, "model", "pad_id", c.pad_id);
}

inline ModelConfig model_config_from(const Settings& s, ModelConfig c = {}) {
  c.n_layers = get_setting(s, "model", "n_layers", c.n_layers);
  c.d_model = get_setting(s, "model", "d_model", c.d_model);
  c.n_heads = get_setting(s, "model", "n_heads", c.n_heads);
  c.d_ffn = get_setting(s, "model", "d_ffn", c.d_ffn);
  c.vocab_size = get_setting(s, "model", "vocab_size", c.vocab_size);
  c.max_positions = get_setting(s, "model", "max_positions", c.max_positions);
  c.seed = get_setting(s, "model", "seed", c.seed);
  c.pad_id = get_setting(s, "model", "pad_id", c.pad_id);
  return c;
}

// --- lora ----------------------------------------------------------------

inline void put_lora_config(Settings& s, const LoraConfig& c) {
  put_setting(s, "lora", "rank", c.rank);
  put_setting(s, "lora", "alpha", c.alpha);
  put_setting(s, "lora", "dropout", c.dropout);
  put_setting(s, "lora", "targets", join_list(c.targets));
}

inline LoraConfig lora_config_from(const Settings& s, LoraConfig c = {}) {
  c.rank = get_setting(s, "lora", "rank", c.rank);
  c.alpha = get_setting(s, "lora", "alpha", c.alpha);
  c.dropout = get_setting(s, "lora", "dropout", c.dropout);
  if (has_setting(s, "lora", "targets")) c.targets = split_list(get_setting<std::string>(s, "lora", "targets", ""));
  return c;
}

// --- train ---------------------------------------------------------------

inline void put_train_config(Settings& s, const TrainConfig& c) {
  put_setting(s, "train", "phase", std::string(to_string(c.phase)));
  put_setting(s, "train", "stage", c.stage);
  put_setting(s, "train", "peak_lr", c.peak_lr);
  put_setting(s, "train", "warmup_steps", c.warmup_steps);
  put_setting(s, "train", "warmup_ratio", c.warmup_ratio);
  put_setting(s, "train", "total_steps", c.total_steps);
  put_setting(s, "train", "micro_batch", c.micro_batch);
  put_setting(s, "train", "grad_accum", c.grad_accum);
  put_setting(s, "train", "epochs", c.epochs);
  put_setting(s, "train", "beta1", c.adam.beta1);
  put_setting(s, "train", "beta2", c.adam.beta2);
  put_setting(s, "train", "eps", c.adam.eps);
  put_setting(s, "train", "weight_decay", c.adam.weight_decay);
  put_setting(s, "train", "mask_rate_min", c.mask_rates.min);
  put_setting(s, "train", "mask_rate_max", c.mask_rates.max);
  put_setting(s, "train", "seed", c.seed);
  put_setting(s, "train", "checkpoint_every", c.checkpoint_every);
}

inline TrainConfig train_config_from(const Settings& s, TrainConfig c = {}) {
  if (has_setting(s, "train", "phase")) c.phase = parse_train_phase(get_setting<std::string>(s, "train", "phase", ""));
  c.stage = get_setting(s, "train", "stage", c.stage);
  c.peak_lr = get_setting(s, "train", "peak_lr", c.peak_lr);
  c.warmup_steps = get_setting(s, "train", "warmup_steps", c.warmup_steps);
  c.warmup_ratio = get_setting(s, "train", "warmup_ratio", c.warmup_ratio);
  c.total_steps = get_setting(s, "train", "total_steps", c.total_steps);
  c.micro_batch = get_setting(s, "train", "micro_batch", c.micro_batch);
  c.grad_accum = get_setting(s, "train", "grad_accum", c.grad_accum);
  c.epochs = get_setting(s, "train", "epochs", c.epochs);
  c.adam.beta1 = get_setting(s, "train", "beta1", c.adam.beta1);
  c.adam.beta2 = get_setting(s, "train", "beta2", c.adam.beta2);
  c.adam.eps = get_setting(s, "train", "eps", c.adam.eps);
  c.adam.weight_decay = get_setting(s, "train", "weight_decay", c.adam.weight_decay);
  c.mask_rates.min = get_setting(s, "train", "mask_rate_min", c.mask_rates.min);
  c.mask_rates.max = get_setting(s, "train", "mask_rate_max", c.mask_rates.max);
  c.seed = get_setting(s, "train", "seed", c.seed);
  c.checkpoint_every = get_setting(s, "train", "checkpoint_every", c.checkpoint_every);
  return c;
}

// --- generate ------------------------------------------------------------

inline void put_generator_config(Settings& s, const GeneratorConfig& c) {
  put_setting(s, "generate", "steps", c.steps);
  put_setting(s, "generate", "max_new_tokens", c.max_new_tokens);
  put_setting(s, "generate", "temperature", c.temperature);
  put_setting(s, "generate", "block_len", c.block_len);
  put_setting(s, "generate", "rep_penalty", c.rep_penalty);
  put_setting(s, "generate", "remask", std::string(to_string(c.remask)));
  put_setting(s, "generate", "stochastic", c.stochastic);
  put_setting(s, "generate", "cfg_scale", c.cfg_scale);
  put_setting(s, "generate", "seed", c.seed);
}

inline GeneratorConfig generator_config_from(const Settings& s, GeneratorConfig c = {}) {
  c.steps = get_setting(s, "generate", "steps", c.steps);
  c.max_new_tokens = get_setting(s, "generate", "max_new_tokens", c.max_new_tokens);
  c.temperature = get_setting(s, "generate", "temperature", c.temperature);
  c.block_len = get_setting(s, "generate", "block_len", c.block_len);
  c.rep_penalty = get_setting(s, "generate", "rep_penalty", c.rep_penalty);
  if (has_setting(s, "generate", "remask")) c.remask = parse_remask(get_setting<std::string>(s, "generate", "remask", ""));
  c.stochastic = get_setting(s, "generate", "stochastic", c.stochastic);
  c.cfg_scale = get_setting(s, "generate", "cfg_scale", c.cfg_scale);
  c.seed = get_setting(s, "generate", "seed", c.seed);
  return c;
}

// --- eval ----------------------------------------------------------------

inline void put_eval_config(Settings& s, const EvalConfig& c) {
  put_setting(s, "eval", "mask_prob", c.mask_prob);
  put_setting(s, "eval", "max_len", c.max_len);
  put_setting(s, "eval", "seed", c.seed);
  put_setting(s, "eval", "num_rounds", c.num_rounds);
}

inline EvalConfig eval_config_from(const Settings& s, EvalConfig c = {}) {
  c.mask_prob = get_setting(s, "eval", "mask_prob", c.mask_prob);
  c.max_len = get_setting(s, "eval", "max_len", c.max_len);
  c.seed = get_setting(s, "eval", "seed", c.seed);
  c.num_rounds = get_setting(s, "eval", "num_rounds", c.num_rounds);
  return c;
}

}  // namespace mdlm
