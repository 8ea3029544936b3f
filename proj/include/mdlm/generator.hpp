// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/model.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/vocab.hpp"

namespace mdlm {

enum class RemaskStrategy { LowConfidence, Random };

inline std::string_view to_string(RemaskStrategy r) { return r == RemaskStrategy::LowConfidence ? "low_conf" : "random"; }

inline RemaskStrategy parse_remask(std::string_view s) {
  if (s == "low_conf") return RemaskStrategy::LowConfidence;
  if (s == "random") return RemaskStrategy::Random;
  throw Error("unknown remask strategy: " + std::string(s));
}

struct GeneratorConfig {
  int steps = 128;
  int max_new_tokens = 128;
  double temperature = 0.1;
  int block_len = 32;
  double rep_penalty = 1.2;
  RemaskStrategy remask = RemaskStrategy::LowConfidence;
  bool stochastic = false;
  double cfg_scale = 0.0;
  std::uint64_t seed = 0;

  /// Longer-context preset: 128 steps for 128 new tokens.
  static GeneratorConfig long_context() { return GeneratorConfig{}; }

  /// Shorter-context preset: 64 steps for 64 new tokens.
  static GeneratorConfig short_context() {
    GeneratorConfig c;
    c.steps = 64;
    c.max_new_tokens = 64;
    return c;
  }

  int padded_new_tokens() const { return (max_new_tokens + block_len - 1) / block_len * block_len; }
  int num_blocks() const { return padded_new_tokens() / block_len; }

  void validate() const {
    if (max_new_tokens < 1 || block_len < 1 || steps < 1) throw Error("steps, max_new_tokens and block_len must be positive");
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
    if (rep_penalty < 1.0) throw Error("repetition penalty must be >= 1");
    if (cfg_scale < 0.0) throw Error("cfg scale must be >= 0");
    if (steps % num_blocks() != 0) {
      throw Error("steps (" + std::to_string(steps) + ") must be divisible by the number of blocks (" +
                  std::to_string(num_blocks()) + ")");
    }
  }
};

/// CTRL-style penalty: logits of context tokens are divided by the penalty
/// when positive and multiplied by it otherwise.
inline void apply_repetition_penalty(std::span<double> logits, std::span<const TokenId> context, double penalty) {
  if (penalty == 1.0) return;
  std::vector<bool> seen(logits.size(), false);
  for (TokenId id : context) {
    if (id < 0 || static_cast<std::size_t>(id) >= logits.size() || seen[static_cast<std::size_t>(id)]) continue;
    seen[static_cast<std::size_t>(id)] = true;
    double& l = logits[static_cast<std::size_t>(id)];
    l = l > 0.0 ? l / penalty : l * penalty;
  }
}

/// (1 + w) * cond - w * uncond.
inline std::vector<double> apply_cfg(std::span<const double> cond, std::span<const double> uncond, double w) {
  if (cond.size() != uncond.size()) throw Error("cfg logits differ in size");
  std::vector<double> out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = (1.0 + w) * cond[i] - w * uncond[i];
  return out;
}

/// Indices of the k highest confidences, ties to the lower index, returned
/// in ascending index order.
inline std::vector<std::size_t> confidence_select(std::span<const double> confidences, std::size_t k) {
  if (k < 1 || k > confidences.size()) throw Error("quota must lie in [1, number of masked positions]");
  std::vector<std::size_t> idx(confidences.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// k of n indices chosen uniformly without replacement, ascending.
inline std::vector<std::size_t> random_select(std::size_t n, std::size_t k, Rng& rng) {
  if (k < 1 || k > n) throw Error("quota must lie in [1, number of masked positions]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Number of positions finalized at each step of one block: block_len split
/// as evenly as possible, earlier steps taking the remainder.
inline std::vector<int> step_quotas(int block_len, int steps_per_block) {
  std::vector<int> q(static_cast<std::size_t>(steps_per_block), block_len / steps_per_block);
  for (int i = 0; i < block_len % steps_per_block; ++i) ++q[static_cast<std::size_t>(i)];
  return q;
}

struct GenerationStep {
  int block = 0;
  int step = 0;  // global step index
  std::vector<std::size_t> finalized;  // absolute positions
  std::vector<TokenId> state;          // sequence after the step
};

struct GenerationResult {
  TokenSequence sequence;
  std::size_t prompt_len = 0;
  std::size_t forward_passes = 0;
  std::vector<GenerationStep> trace;

  std::vector<TokenId> generated() const {
    return {sequence.ids.begin() + static_cast<std::ptrdiff_t>(prompt_len), sequence.ids.end()};
  }
};

/// Renders a step state with masks as '_'. Char vocabularies render tokens
/// back to back, word vocabularies separate them with spaces.
inline std::string render_state(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vocab.mode() == TokenizerMode::Word && i > 0) out += ' ';
    if (ids[i] == vocab.specials().mask) {
      out += '_';
    } else {
      out += vocab.token(ids[i]);
    }
  }
  return out;
}

enum class CfgPath { Enabled, Disabled };

namespace detail {

template <typename T>
std::vector<double> row_as_double(const Matrix<T>& m, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = static_cast<double>(m(r, c));
  return out;
}

inline void softmax_inplace(std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

/// Blockwise masked-diffusion sampler. `Path == Disabled` compiles the loop
/// without any guidance code, as a reference for the cfg_scale = 0 path.
template <CfgPath Path, typename T>
GenerationResult generate(const Encoder<T>& model, const TokenSequence& prompt, const GeneratorConfig& cfg,
                          const SpecialIds& sp, bool record_trace) {
  cfg.validate();
  for (TokenId id : prompt.ids) {
    if (id == sp.mask) throw Error("prompt must not contain mask tokens");
  }
  const auto prompt_len = prompt.size();
  const auto padded = static_cast<std::size_t>(cfg.padded_new_tokens());
  if (prompt_len + padded > static_cast<std::size_t>(model.config().max_positions)) {
    throw Error("prompt of " + std::to_string(prompt_len) + " tokens plus " + std::to_string(padded) +
                " new tokens exceeds max_positions " + std::to_string(model.config().max_positions));
  }

  GenerationResult res;
  res.prompt_len = prompt_len;
  TokenSequence& seq = res.sequence;
  seq = prompt;
  for (std::size_t i = 0; i < padded; ++i) seq.push_back(sp.mask, Region::Response, true);

  Rng rng(derive_seed(cfg.seed, {0x6E4}));
  const int blocks = cfg.num_blocks();
  const int per_block = cfg.steps / blocks;
  const auto quotas = step_quotas(cfg.block_len, per_block);
  const auto vocab_size = static_cast<std::size_t>(model.config().vocab_size);

  int global_step = 0;
  for (int b = 0; b < blocks; ++b) {
    const std::size_t block_begin = prompt_len + static_cast<std::size_t>(b * cfg.block_len);
    const std::size_t block_end = block_begin + static_cast<std::size_t>(cfg.block_len);
    for (int j = 0; j < per_block; ++j, ++global_step) {
      std::vector<std::size_t> masked_pos;
      for (std::size_t p = block_begin; p < block_end; ++p) {
        if (seq.masked[p]) masked_pos.push_back(p);
      }
      const std::size_t quota = std::min(static_cast<std::size_t>(quotas[static_cast<std::size_t>(j)]), masked_pos.size());
      GenerationStep st{b, global_step, {}, {}};
      if (quota > 0) {
        const Matrix<T> cond = model.forward(seq);
        ++res.forward_passes;
        Matrix<T> uncond;
        if constexpr (Path == CfgPath::Enabled) {
          if (cfg.cfg_scale != 0.0) {
            TokenSequence u = seq;
            for (std::size_t p = 0; p < u.size(); ++p) {
              if (u.region[p] == Region::Prompt) {
                u.ids[p] = sp.mask;
                u.masked[p] = true;
              }
            }
            uncond = model.forward(u);
            ++res.forward_passes;
          }
        }

        std::vector<TokenId> context(prompt.ids);
        for (std::size_t p = prompt_len; p < seq.size(); ++p) {
          if (!seq.masked[p]) context.push_back(seq.ids[p]);
        }

        std::vector<TokenId> candidate(masked_pos.size());
        std::vector<double> confidence(masked_pos.size());
        for (std::size_t m = 0; m < masked_pos.size(); ++m) {
          const auto row = static_cast<Eigen::Index>(masked_pos[m]);
          std::vector<double> logits = row_as_double(cond, row);
          apply_repetition_penalty(logits, context, cfg.rep_penalty);
          for (double& l : logits) l /= cfg.temperature;
          if constexpr (Path == CfgPath::Enabled) {
            if (cfg.cfg_scale != 0.0) {
              std::vector<double> ul = row_as_double(uncond, row);
              apply_repetition_penalty(ul, context, cfg.rep_penalty);
              for (double& l : ul) l /= cfg.temperature;
              logits = apply_cfg(logits, ul, cfg.cfg_scale);
            }
          }
          // The absorbing state is never a valid prediction.
          if (sp.mask >= 0 && static_cast<std::size_t>(sp.mask) < vocab_size) {
            logits[static_cast<std::size_t>(sp.mask)] = -std::numeric_limits<double>::infinity();
          }
          softmax_inplace(logits);
          std::size_t pick = 0;
          if (cfg.stochastic) {
            double u = rng.uniform();
            pick = vocab_size - 1;
            for (std::size_t t = 0; t < vocab_size; ++t) {
              if (u < logits[t]) {
                pick = t;
                break;
              }
              u -= logits[t];
            }
            while (logits[pick] == 0.0 && pick > 0) --pick;
          } else {
            pick = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
          }
          candidate[m] = static_cast<TokenId>(pick);
          confidence[m] = logits[pick];
        }

        const auto chosen = cfg.remask == RemaskStrategy::LowConfidence ? confidence_select(confidence, quota)
                                                                        : random_select(masked_pos.size(), quota, rng);
        for (std::size_t m : chosen) {
          const std::size_t p = masked_pos[m];
          seq.ids[p] = candidate[m];
          seq.masked[p] = false;
          st.finalized.push_back(p);
        }
      }
      if (record_trace) {
        st.state = seq.ids;
        res.trace.push_back(std::move(st));
      }
    }
  }

  seq.ids.resize(prompt_len + static_cast<std::size_t>(cfg.max_new_tokens));
  seq.masked.resize(seq.ids.size());
  seq.region.resize(seq.ids.size());
  return res;
}

}  // namespace detail

/// Reverse-process sampler: appends max_new_tokens masks after the prompt
/// and denoises them block by block, left to right. Each step predicts every
/// still-masked position of the current block and finalizes the
/// highest-confidence quota (or a random quota); the rest stay masked.
template <typename T>
GenerationResult generate(const Encoder<T>& model, const TokenSequence& prompt, const GeneratorConfig& cfg,
                          const SpecialIds& sp, bool record_trace = false) {
  return detail::generate<CfgPath::Enabled>(model, prompt, cfg, sp, record_trace);
}

}  // namespace mdlm
