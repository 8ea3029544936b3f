// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/diffusion.hpp"
#include "mdlm/model.hpp"
#include "mdlm/parallel.hpp"
#include "mdlm/rng.hpp"

namespace mdlm {

struct EvalConfig {
  double mask_prob = 0.15;
  std::size_t max_len = 512;
  std::uint64_t seed = 0;
  int num_rounds = 4;

  void validate() const {
    if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw Error("mask_prob must lie in (0, 1)");
    if (max_len == 0) throw Error("max_len must be positive");
    if (num_rounds < 1) throw Error("num_rounds must be >= 1");
  }
};

struct PerplexityResult {
  double ppl = 0.0;
  double mean_ce = 0.0;
  std::size_t docs = 0;
  std::size_t masked_tokens = 0;
};

/// exp(total masked CE / total masked count) over num_rounds seeded
/// corruptions of every document. Documents are truncated to
/// min(max_len, max_positions).
template <typename T>
PerplexityResult pseudo_perplexity(const Encoder<T>& model, std::span<const TokenSequence> docs, const EvalConfig& cfg,
                                   const SpecialIds& sp) {
  cfg.validate();
  if (docs.empty()) throw Error("pseudo_perplexity needs at least one document");
  const std::size_t limit = std::min(cfg.max_len, static_cast<std::size_t>(model.config().max_positions));
  std::vector<CrossEntropy> per_doc(docs.size());
  parallel_for(docs.size(), [&](std::size_t d) {
    TokenSequence doc = docs[d];
    if (doc.size() > limit) {
      doc.ids.resize(limit);
      doc.masked.resize(limit);
      doc.region.resize(limit);
    }
    for (int r = 0; r < cfg.num_rounds; ++r) {
      Rng rng = Rng::derive(cfg.seed, {d, static_cast<std::uint64_t>(r)});
      TokenSequence noisy = corrupt(doc, cfg.mask_prob, rng, sp);
      if (std::none_of(noisy.masked.begin(), noisy.masked.end(), [](bool b) { return b; })) continue;
      per_doc[d] += masked_ce(model.forward(noisy), doc.ids, noisy.masked);
    }
  });
  CrossEntropy total;
  for (const auto& ce : per_doc) total += ce;
  if (total.count == 0) throw Error("no position was masked across the corpus");
  PerplexityResult out;
  out.mean_ce = total.mean();
  out.ppl = std::exp(out.mean_ce);
  out.docs = docs.size();
  out.masked_tokens = total.count;
  return out;
}

}  // namespace mdlm
