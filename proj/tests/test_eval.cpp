// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace mdlm {
namespace {

using testing::random_plain;
using testing::tiny_config;

std::vector<TokenSequence> docs(std::size_t n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_plain(len, 12, rng, 8));
  return out;
}

TEST(Eval, UniformModelHasPerplexityV) {
  auto model = Encoder<double>::initialize(tiny_config());
  model.parameters().at("head.W").setZero();
  model.parameters().at("head.b").setZero();
  auto d = docs(6, 12, 1);
  auto r = pseudo_perplexity(model, std::span<const TokenSequence>(d), EvalConfig{}, SpecialIds{});
  EXPECT_NEAR(r.ppl, 12.0, 12.0 * 1e-9);
  EXPECT_NEAR(r.mean_ce, std::log(12.0), 1e-12);
  EXPECT_EQ(r.docs, 6u);
  EXPECT_GT(r.masked_tokens, 0u);
}

TEST(Eval, SameSeedSameResult) {
  auto model = Encoder<float>::initialize(tiny_config());
  testing::jitter(model.parameters(), 0.2, 2);
  auto d = docs(5, 16, 3);
  EvalConfig cfg;
  cfg.seed = 4;
  auto a = pseudo_perplexity(model, std::span<const TokenSequence>(d), cfg, SpecialIds{});
  auto b = pseudo_perplexity(model, std::span<const TokenSequence>(d), cfg, SpecialIds{});
  EXPECT_EQ(a.ppl, b.ppl);
  EXPECT_EQ(a.masked_tokens, b.masked_tokens);
  EXPECT_GE(a.ppl, 1.0);
  cfg.seed = 5;
  auto c = pseudo_perplexity(model, std::span<const TokenSequence>(d), cfg, SpecialIds{});
  EXPECT_NE(a.ppl, c.ppl);
}

TEST(Eval, MaskedCountFollowsRate) {
  auto model = Encoder<float>::initialize(tiny_config(12, 64));
  auto d = docs(40, 64, 6);
  EvalConfig cfg;
  auto r = pseudo_perplexity(model, std::span<const TokenSequence>(d), cfg, SpecialIds{});
  // 40 docs x 64 tokens x 4 rounds, each masked with probability 0.15.
  const double n = 40 * 64 * 4;
  EXPECT_NEAR(static_cast<double>(r.masked_tokens), n * 0.15, 3 * std::sqrt(n * 0.15 * 0.85));
}

TEST(Eval, LongDocumentsAreTruncated) {
  auto model = Encoder<float>::initialize(tiny_config(12, 16));
  auto d = docs(3, 40, 7);
  EvalConfig cfg;
  cfg.mask_prob = 0.5;
  EXPECT_NO_THROW(pseudo_perplexity(model, std::span<const TokenSequence>(d), cfg, SpecialIds{}));
}

TEST(Eval, Errors) {
  auto model = Encoder<float>::initialize(tiny_config());
  std::vector<TokenSequence> none;
  EXPECT_THROW(pseudo_perplexity(model, std::span<const TokenSequence>(none), EvalConfig{}, SpecialIds{}), Error);
  auto d = docs(2, 4, 8);
  EvalConfig bad;
  bad.mask_prob = 0.0;
  EXPECT_THROW(pseudo_perplexity(model, std::span<const TokenSequence>(d), bad, SpecialIds{}), Error);
}

// Perplexity tracks model quality: a model trained on the documents beats
// the untrained one, which beats a heavily perturbed copy of the trained one.
TEST(Eval, PerplexityOrdersModelsByFit) {
  std::vector<TokenSequence> d;
  for (int i = 0; i < 4; ++i) {
    std::vector<TokenId> ids;
    for (int j = 0; j < 16; ++j) ids.push_back(8 + (j + i) % 4);
    d.push_back(TokenSequence::plain(ids));
  }
  auto span = std::span<const TokenSequence>(d);
  auto untrained = Encoder<float>::initialize(tiny_config());
  auto trained = untrained;
  TrainConfig tc;
  tc.phase = TrainPhase::Base;
  tc.micro_batch = 4;
  tc.epochs = 600;
  tc.peak_lr = 3e-3;
  auto st = OptimizerState<float>::for_gradients(trained.zero_gradients());
  train(trained, span, tc, st, SpecialIds{});
  auto perturbed = trained;
  testing::jitter(perturbed.parameters(), 1.0, 9);
  const double p_trained = pseudo_perplexity(trained, span, EvalConfig{}, SpecialIds{}).ppl;
  const double p_untrained = pseudo_perplexity(untrained, span, EvalConfig{}, SpecialIds{}).ppl;
  const double p_perturbed = pseudo_perplexity(perturbed, span, EvalConfig{}, SpecialIds{}).ppl;
  EXPECT_LT(p_trained, 1.5);
  EXPECT_LT(p_trained, p_untrained);
  EXPECT_LT(p_trained, p_perturbed);
}

}  // namespace
}  // namespace mdlm
