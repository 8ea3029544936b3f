// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/tensor.hpp"
#include "mdlm/vocab.hpp"

namespace mdlm {

/// Per-step mask probabilities beta_1..beta_T and survival products
/// s_t = prod_{u<=t} (1 - beta_u).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw Error("noise schedule needs at least one step");
    double s = 1.0;
    for (double b : betas_) {
      if (!(b >= 0.0 && b <= 1.0)) throw Error("beta must lie in [0, 1]");
      s *= 1.0 - b;
      survival_.push_back(s);
    }
  }

  /// beta_t = 1 / (T - t + 1), giving s_t = 1 - t/T and s_T = 0.
  static NoiseSchedule linear_survival(std::size_t steps) {
    std::vector<double> betas(steps);
    for (std::size_t t = 1; t <= steps; ++t) betas[t - 1] = 1.0 / static_cast<double>(steps - t + 1);
    return NoiseSchedule(std::move(betas));
  }

  std::size_t steps() const { return betas_.size(); }
  /// 1-based step index.
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double survival(std::size_t t) const { return t == 0 ? 1.0 : survival_.at(t - 1); }
  /// Probability that a clean token is masked by step t.
  double mask_probability(std::size_t t) const { return 1.0 - survival(t); }
  const std::vector<double>& betas() const { return betas_; }

 private:
  std::vector<double> betas_;
  std::vector<double> survival_;
};

/// Single-token forward kernel q(x_next | x_prev) with an absorbing mask.
inline double transition_prob(TokenId x_prev, TokenId x_next, double beta, TokenId mask_id) {
  if (x_prev == mask_id) return x_next == mask_id ? 1.0 : 0.0;
  if (x_next == x_prev) return 1.0 - beta;
  if (x_next == mask_id) return beta;
  return 0.0;
}

/// Positions the forward process may touch: never PAD, never PROMPT.
inline bool maskable(const TokenSequence& s, std::size_t i, TokenId pad_id) {
  return s.ids[i] != pad_id && s.region[i] != Region::Prompt;
}

/// One application of the per-token kernel with rate beta. Already-masked
/// positions stay masked.
inline TokenSequence forward_step(const TokenSequence& x_prev, double beta, Rng& rng, const SpecialIds& sp) {
  TokenSequence out = x_prev;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.masked[i] || out.ids[i] == sp.mask || !maskable(out, i, sp.pad)) continue;
    if (rng.bernoulli(beta)) {
      out.ids[i] = sp.mask;
      out.masked[i] = true;
    }
  }
  return out;
}

/// Masks each eligible position of a clean sequence independently with
/// probability mask_rate.
inline TokenSequence corrupt(const TokenSequence& x0, double mask_rate, Rng& rng, const SpecialIds& sp) {
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw Error("mask_rate must lie in [0, 1]");
  for (TokenId id : x0.ids) {
    if (id == sp.mask) throw Error("corrupt expects a clean sequence without mask tokens");
  }
  return forward_step(x0, mask_rate, rng, sp);
}

enum class MaskingMode { Pretrain, Sft };

struct MaskRateRange {
  double min = 0.05;
  double max = 0.95;
};

struct TrainingRow {
  TokenSequence noisy;
  std::vector<TokenId> targets;  // original ids; read at masked positions
  double mask_rate = 0.0;
  std::size_t example_index = 0;

  std::size_t masked_count() const { return static_cast<std::size_t>(std::count(noisy.masked.begin(), noisy.masked.end(), true)); }
};

/// Corrupts one example for training. Returns nullopt when the example has
/// nothing to mask (e.g. an SFT pair without a response region). A draw
/// that masks nothing is redrawn.
inline std::optional<TrainingRow> make_training_row(const TokenSequence& example, MaskingMode mode,
                                                    const MaskRateRange& range, Rng& rng, const SpecialIds& sp) {
  if (!(range.min >= 0.0 && range.max <= 1.0 && range.min <= range.max) || range.max <= 0.0) {
    throw Error("invalid mask-rate range");
  }
  std::size_t eligible = 0;
  for (std::size_t i = 0; i < example.size(); ++i) {
    if (mode == MaskingMode::Pretrain && example.region[i] != Region::Plain) {
      throw Error("pretraining examples must be PLAIN");
    }
    const bool ok = mode == MaskingMode::Sft ? example.region[i] == Region::Response : example.ids[i] != sp.pad;
    if (ok && example.ids[i] != sp.pad) ++eligible;
  }
  if (eligible == 0) return std::nullopt;

  TrainingRow row;
  row.targets = example.ids;
  for (;;) {
    const double rate = range.min + (range.max - range.min) * rng.uniform();
    row.noisy = corrupt(example, rate, rng, sp);
    row.mask_rate = rate;
    if (row.masked_count() > 0) return row;
  }
}

struct TrainingBatch {
  std::vector<TrainingRow> rows;
  std::size_t skipped = 0;
};

/// Each example draws from its own stream derived from (seed, index), so
/// the batch does not depend on how examples are split across workers.
inline TrainingBatch make_training_batch(std::span<const TokenSequence> examples, MaskingMode mode,
                                         const MaskRateRange& range, std::uint64_t seed, const SpecialIds& sp) {
  TrainingBatch batch;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Rng rng = Rng::derive(seed, {i});
    auto row = make_training_row(examples[i], mode, range, rng, sp);
    if (!row) {
      ++batch.skipped;
      continue;
    }
    row->example_index = i;
    batch.rows.push_back(std::move(*row));
  }
  return batch;
}

struct CrossEntropy {
  double sum = 0.0;
  std::size_t count = 0;

  double mean() const { return sum / static_cast<double>(count); }
  CrossEntropy& operator+=(const CrossEntropy& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

/// Summed cross-entropy over masked positions. If `dlogits` is given it
/// receives d(sum)/d(logits), zero on unmasked rows.
template <typename T>
CrossEntropy masked_ce(const Matrix<T>& logits, std::span<const TokenId> targets, const std::vector<bool>& masked,
                       Matrix<T>* dlogits = nullptr) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size() || masked.size() != targets.size()) {
    throw Error("logits, targets and mask disagree in length");
  }
  if (dlogits) *dlogits = Matrix<T>::Zero(logits.rows(), logits.cols());
  CrossEntropy ce;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!masked[static_cast<std::size_t>(i)]) continue;
    const TokenId t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw Error("target id out of range");
    const T mx = logits.row(i).maxCoeff();
    const T lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    ce.sum += static_cast<double>(lse - logits(i, t));
    ++ce.count;
    if (dlogits) {
      dlogits->row(i) = (logits.row(i).array() - lse).exp();
      (*dlogits)(i, t) -= T(1);
    }
  }
  return ce;
}

/// Mean cross-entropy over masked positions only.
template <typename T>
double masked_ce_loss(const Matrix<T>& logits, std::span<const TokenId> targets, const std::vector<bool>& masked) {
  auto ce = masked_ce(logits, targets, masked);
  if (ce.count == 0) throw Error("masked_ce_loss needs at least one masked position");
  return ce.mean();
}

}  // namespace mdlm
