// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/corpus.hpp"
#include "mdlm/diffusion.hpp"
#include "mdlm/model.hpp"
#include "mdlm/parallel.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/tensor.hpp"

namespace mdlm {

enum class TrainPhase { Base, Cpt, Sft };

inline std::string_view to_string(TrainPhase p) {
  switch (p) {
    case TrainPhase::Base: return "base";
    case TrainPhase::Cpt: return "cpt";
    case TrainPhase::Sft: return "sft";
  }
  return "base";
}

inline TrainPhase parse_train_phase(std::string_view s) {
  if (s == "base") return TrainPhase::Base;
  if (s == "cpt") return TrainPhase::Cpt;
  if (s == "sft") return TrainPhase::Sft;
  throw Error("unknown training phase: " + std::string(s));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  TrainPhase phase = TrainPhase::Cpt;
  int stage = 0;
  double peak_lr = 5e-5;
  /// Negative means warmup_ratio * total_steps.
  std::int64_t warmup_steps = -1;
  double warmup_ratio = 0.03;
  /// 0 means ceil(dataset / effective_batch) * epochs.
  std::int64_t total_steps = 0;
  int micro_batch = 4;
  int grad_accum = 1;
  int epochs = 1;
  AdamWConfig adam;
  MaskRateRange mask_rates;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;

  int effective_batch() const { return micro_batch * grad_accum; }

  std::int64_t steps_per_epoch(std::size_t dataset_size) const {
    const auto eb = static_cast<std::size_t>(effective_batch());
    return static_cast<std::int64_t>((dataset_size + eb - 1) / eb);
  }

  std::int64_t resolved_total_steps(std::size_t dataset_size) const {
    return total_steps > 0 ? total_steps : steps_per_epoch(dataset_size) * epochs;
  }

  std::int64_t resolved_warmup(std::int64_t total) const {
    if (warmup_steps >= 0) return std::min(warmup_steps, total);
    return static_cast<std::int64_t>(std::floor(warmup_ratio * static_cast<double>(total)));
  }

  MaskingMode masking() const { return phase == TrainPhase::Sft ? MaskingMode::Sft : MaskingMode::Pretrain; }

  void validate() const {
    if (micro_batch < 1 || grad_accum < 1 || epochs < 1) throw Error("batch sizes and epochs must be positive");
    if (peak_lr < 0.0) throw Error("peak_lr must be non-negative");
  }
};

/// Linear warmup to the peak, then half-cosine decay to zero at total.
inline double cosine_lr(std::int64_t step, double peak, std::int64_t warmup, std::int64_t total) {
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

inline double cosine_lr(std::int64_t step, const TrainConfig& cfg, std::int64_t total) {
  return cosine_lr(step, cfg.peak_lr, cfg.resolved_warmup(total), total);
}

template <typename T>
struct OptimizerState {
  TensorStore<T> m;
  TensorStore<T> v;
  std::int64_t step = 0;     // training steps taken, including skipped ones
  std::int64_t updates = 0;  // applied AdamW updates; drives bias correction

  static OptimizerState for_gradients(const Gradients<T>& like) {
    OptimizerState s;
    s.m = like.zeros_like();
    s.v = like.zeros_like();
    return s;
  }
};

/// Biases and layernorm parameters are excluded from weight decay.
inline bool applies_weight_decay(std::string_view name) {
  if (name.ends_with(".scale") || name.ends_with(".shift")) return false;
  const auto dot = name.rfind('.');
  const auto last = dot == std::string_view::npos ? name : name.substr(dot + 1);
  return !(last == "b" || last.starts_with("b_"));
}

/// Decoupled-weight-decay Adam with bias correction. Returns false (and
/// leaves everything untouched) when any gradient is non-finite.
template <typename T>
bool adamw_step(TensorStore<T>& params, const Gradients<T>& grads, OptimizerState<T>& state, double lr,
                const AdamWConfig& cfg) {
  if (!grads.all_finite()) return false;
  ++state.updates;
  const auto t = static_cast<double>(state.updates);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(cfg.eps);
  for (const auto& [name, g] : grads) {
    auto& p = params.at(name);
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    if (applies_weight_decay(name) && cfg.weight_decay != 0.0) p *= T(1) - static_cast<T>(lr * cfg.weight_decay);
    p.array() -= step * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
  return true;
}

struct MetricRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainHooks {
  /// Receives `step,lr,loss` rows, flushed after every step.
  std::ostream* metrics_csv = nullptr;
  bool write_csv_header = true;
  /// Called at every checkpoint_every boundary and after the final step.
  std::function<void(std::int64_t step)> on_checkpoint;
  /// Stop (without a final checkpoint) once this many steps are done.
  std::int64_t stop_at = -1;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::vector<MetricRow> metrics;
  /// Token-weighted mean masked CE per completed epoch.
  std::vector<double> epoch_loss;
  std::int64_t skipped_updates = 0;
  std::size_t skipped_examples = 0;
};

/// Gradient and summed CE of one example under its own RNG streams.
template <typename T>
struct ExampleResult {
  Gradients<T> grads;
  CrossEntropy ce;
  bool skipped = false;
};

template <typename T>
ExampleResult<T> example_gradient(const Encoder<T>& model, const TokenSequence& example, const TrainConfig& cfg,
                                  const SpecialIds& sp, std::uint64_t epoch, std::uint64_t index) {
  ExampleResult<T> out;
  Rng mask_rng = Rng::derive(cfg.seed, {epoch, index, 1});
  auto row = make_training_row(example, cfg.masking(), cfg.mask_rates, mask_rng, sp);
  if (!row) {
    out.skipped = true;
    return out;
  }
  Rng dropout_rng = Rng::derive(cfg.seed, {epoch, index, 2});
  ForwardCache<T> cache;
  Matrix<T> logits = model.forward(row->noisy, cache, &dropout_rng);
  Matrix<T> dlogits;
  out.ce = masked_ce(logits, row->targets, row->noisy.masked, &dlogits);
  out.grads = model.zero_gradients();
  model.backward(row->noisy, cache, dlogits, out.grads);
  return out;
}

/// Epoch loop with seeded per-epoch shuffling. Each optimizer step sums the
/// masked CE over all of its micro-batches and divides by the step's total
/// masked-token count, so micro_batch x grad_accum splits of the same
/// examples give the same update. Resumes from state.step.
template <typename T>
TrainResult train(Encoder<T>& model, std::span<const TokenSequence> dataset, const TrainConfig& cfg,
                  OptimizerState<T>& state, const SpecialIds& sp, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (dataset.size() < static_cast<std::size_t>(cfg.micro_batch)) {
    throw Error("dataset of " + std::to_string(dataset.size()) + " examples is smaller than one micro-batch");
  }
  for (const auto& name : model.trainable_names()) {
    if (!state.m.contains(name)) throw Error("optimizer state is missing tensor " + name);
  }
  TensorStore<T>& trainable = model.has_adapter() ? model.adapter()->tensors : model.parameters();

  const auto n = dataset.size();
  const auto eb = static_cast<std::size_t>(cfg.effective_batch());
  const std::int64_t per_epoch = cfg.steps_per_epoch(n);
  const std::int64_t total = cfg.resolved_total_steps(n);
  const std::int64_t end = hooks.stop_at >= 0 ? std::min(hooks.stop_at, total) : total;

  TrainResult result;
  if (hooks.metrics_csv && hooks.write_csv_header) *hooks.metrics_csv << "step,lr,loss\n" << std::flush;

  std::int64_t perm_epoch = -1;
  std::vector<std::size_t> perm;
  CrossEntropy epoch_ce;
  const std::size_t workers = std::max<std::size_t>(1, thread_count());

  for (std::int64_t s = state.step; s < end; ++s) {
    const std::int64_t epoch = s / per_epoch;
    const std::int64_t in_epoch = s % per_epoch;
    if (epoch != perm_epoch) {
      perm = seeded_permutation(n, derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0xE90C}));
      perm_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(in_epoch) * eb;
    const std::size_t stop = std::min(begin + eb, n);

    Gradients<T> grads = model.zero_gradients();
    CrossEntropy step_ce;
    // Micro-batches in order; within one, examples run in parallel chunks
    // and are reduced in index order.
    for (std::size_t mb = begin; mb < stop; mb += static_cast<std::size_t>(cfg.micro_batch)) {
      const std::size_t mb_end = std::min(mb + static_cast<std::size_t>(cfg.micro_batch), stop);
      for (std::size_t chunk = mb; chunk < mb_end; chunk += workers) {
        const std::size_t chunk_end = std::min(chunk + workers, mb_end);
        std::vector<ExampleResult<T>> parts(chunk_end - chunk);
        parallel_for(parts.size(), [&](std::size_t k) {
          const std::size_t idx = perm[chunk + k];
          parts[k] = example_gradient(model, dataset[idx], cfg, sp, static_cast<std::uint64_t>(epoch), idx);
        });
        for (auto& part : parts) {
          if (part.skipped) {
            ++result.skipped_examples;
            continue;
          }
          grads.accumulate(part.grads);
          step_ce += part.ce;
        }
      }
    }

    const double lr = cosine_lr(s, cfg, total);
    double loss = std::numeric_limits<double>::quiet_NaN();
    if (step_ce.count > 0) {
      loss = step_ce.mean();
      grads.scale(static_cast<T>(1.0 / static_cast<double>(step_ce.count)));
      if (!adamw_step(trainable, grads, state, lr, cfg.adam)) {
        ++result.skipped_updates;
        if (hooks.log) hooks.log("step " + std::to_string(s + 1) + ": non-finite gradient, update skipped");
      }
    } else {
      ++result.skipped_updates;
    }
    epoch_ce += step_ce;
    state.step = s + 1;

    result.metrics.push_back({state.step, lr, loss});
    if (hooks.metrics_csv) *hooks.metrics_csv << state.step << ',' << lr << ',' << loss << '\n' << std::flush;

    if (in_epoch + 1 == per_epoch || state.step == total) {
      if (epoch_ce.count > 0) result.epoch_loss.push_back(epoch_ce.mean());
      epoch_ce = {};
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step != total) {
      hooks.on_checkpoint(state.step);
    }
  }
  if (hooks.on_checkpoint && state.step == total) hooks.on_checkpoint(state.step);
  return result;
}

}  // namespace mdlm
