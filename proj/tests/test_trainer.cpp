// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "test_support.hpp"

namespace mdlm {
namespace {

using testing::random_plain;
using testing::tiny_config;

std::vector<TokenSequence> toy_data(std::size_t n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_plain(len, 12, rng, 8));
  return out;
}

TEST(Trainer, CosineSchedulePoints) {
  const double peak = 1e-3;
  EXPECT_DOUBLE_EQ(cosine_lr(0, peak, 10, 110), 0.0);
  EXPECT_DOUBLE_EQ(cosine_lr(5, peak, 10, 110), 0.0005);
  EXPECT_DOUBLE_EQ(cosine_lr(10, peak, 10, 110), peak);
  EXPECT_NEAR(cosine_lr(60, peak, 10, 110), peak / 2, 1e-15);
  EXPECT_NEAR(cosine_lr(110, peak, 10, 110), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_lr(0, peak, 0, 100), peak);
}

TEST(Trainer, CosineScheduleIsMonotoneOnEachSide) {
  const std::int64_t warmup = 7, total = 90;
  for (std::int64_t s = 1; s <= warmup; ++s) EXPECT_GE(cosine_lr(s, 1.0, warmup, total), cosine_lr(s - 1, 1.0, warmup, total));
  for (std::int64_t s = warmup + 1; s <= total; ++s) EXPECT_LE(cosine_lr(s, 1.0, warmup, total), cosine_lr(s - 1, 1.0, warmup, total));
}

TEST(Trainer, StepArithmetic) {
  TrainConfig c;
  c.micro_batch = 64;
  c.grad_accum = 2;
  c.epochs = 4;
  EXPECT_EQ(c.effective_batch(), 128);
  EXPECT_EQ(c.steps_per_epoch(1000), 8);
  EXPECT_EQ(c.resolved_total_steps(1000), 32);
  EXPECT_EQ(c.resolved_warmup(1000), 30);  // 3%
  c.warmup_steps = 0;
  EXPECT_EQ(c.resolved_warmup(1000), 0);
  c.total_steps = 5;
  EXPECT_EQ(c.resolved_total_steps(1000), 5);
}

TEST(Trainer, WeightDecayExclusions) {
  EXPECT_TRUE(applies_weight_decay("layers.0.attn.W_q"));
  EXPECT_TRUE(applies_weight_decay("tok_emb"));
  EXPECT_TRUE(applies_weight_decay("head.W"));
  EXPECT_FALSE(applies_weight_decay("head.b"));
  EXPECT_FALSE(applies_weight_decay("layers.0.attn.b_q"));
  EXPECT_FALSE(applies_weight_decay("layers.1.ln2.scale"));
  EXPECT_FALSE(applies_weight_decay("ln_f.shift"));
}

// Two steps on one scalar with p0 = 0.5, g = 0.2 then -0.1, lr 0.1,
// wd 0.01; values computed independently in double precision.
TEST(Trainer, AdamWMatchesHandComputedScalar) {
  TensorStore<double> p;
  p.add("w", Matrix<double>::Constant(1, 1, 0.5));
  Gradients<double> g;
  g.add("w", Matrix<double>::Constant(1, 1, 0.2));
  auto st = OptimizerState<double>::for_gradients(g);
  AdamWConfig cfg;
  ASSERT_TRUE(adamw_step(p, g, st, 0.1, cfg));
  EXPECT_NEAR(st.m.at("w")(0, 0), 0.02, 1e-12);
  EXPECT_NEAR(st.v.at("w")(0, 0), 4e-5, 1e-12);
  EXPECT_NEAR(p.at("w")(0, 0), 0.3995000049999997, 1e-12);
  g.at("w")(0, 0) = -0.1;
  ASSERT_TRUE(adamw_step(p, g, st, 0.1, cfg));
  EXPECT_NEAR(st.m.at("w")(0, 0), 0.008, 1e-12);
  EXPECT_NEAR(st.v.at("w")(0, 0), 4.996e-5, 1e-12);
  EXPECT_NEAR(p.at("w")(0, 0), 0.3724668027136757, 1e-12);
  EXPECT_EQ(st.updates, 2);
}

TEST(Trainer, AdamWZeroGradients) {
  TensorStore<double> p;
  p.add("w", Matrix<double>::Constant(2, 2, 0.5));
  p.add("b", Matrix<double>::Constant(1, 2, 0.5));
  Gradients<double> g = p.zeros_like();
  auto st = OptimizerState<double>::for_gradients(g);
  AdamWConfig no_decay;
  no_decay.weight_decay = 0.0;
  auto before = p;
  adamw_step(p, g, st, 0.1, no_decay);
  EXPECT_TRUE(p.at("w") == before.at("w"));

  AdamWConfig decay;
  decay.weight_decay = 0.1;
  for (int k = 1; k <= 3; ++k) {
    adamw_step(p, g, st, 0.01, decay);
    EXPECT_NEAR(p.at("w")(0, 0), 0.5 * std::pow(1 - 0.01 * 0.1, k), 1e-15);
    EXPECT_EQ(p.at("b")(0, 0), 0.5);
  }
}

TEST(Trainer, AdamWSkipsNonFiniteGradients) {
  TensorStore<double> p;
  p.add("w", Matrix<double>::Constant(1, 2, 0.5));
  Gradients<double> g = p.zeros_like();
  g.at("w")(0, 1) = std::nan("");
  auto st = OptimizerState<double>::for_gradients(g);
  auto before = p;
  EXPECT_FALSE(adamw_step(p, g, st, 0.1, AdamWConfig{}));
  EXPECT_TRUE(p.at("w") == before.at("w"));
  EXPECT_EQ(st.updates, 0);
}

TEST(Trainer, GradientAccumulationMatchesLargeBatch) {
  auto cfg = tiny_config();
  auto data = toy_data(8, 10, 1);
  TrainConfig a;
  a.micro_batch = 4;
  a.grad_accum = 2;
  a.total_steps = 1;
  a.warmup_steps = 0;
  a.peak_lr = 1e-2;
  a.seed = 5;
  TrainConfig b = a;
  b.micro_batch = 8;
  b.grad_accum = 1;

  auto ma = Encoder<float>::initialize(cfg);
  auto mb = Encoder<float>::initialize(cfg);
  auto sa = OptimizerState<float>::for_gradients(ma.zero_gradients());
  auto sb = OptimizerState<float>::for_gradients(mb.zero_gradients());
  train(ma, std::span<const TokenSequence>(data), a, sa, SpecialIds{});
  train(mb, std::span<const TokenSequence>(data), b, sb, SpecialIds{});
  const auto init = init_parameters<float>(cfg);
  for (const auto& [name, p] : ma.parameters()) {
    EXPECT_LT((p - mb.parameters().at(name)).cwiseAbs().maxCoeff(), 1e-6f) << name;
  }
  EXPECT_GT((ma.parameters().at("head.W") - init.at("head.W")).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(Trainer, MetricsLogHasOneRowPerStep) {
  auto data = toy_data(10, 8, 2);
  auto model = Encoder<float>::initialize(tiny_config());
  TrainConfig tc;
  tc.micro_batch = 3;
  tc.epochs = 2;  // ceil(10 / 3) = 4 steps per epoch
  auto st = OptimizerState<float>::for_gradients(model.zero_gradients());
  std::ostringstream csv;
  TrainHooks hooks;
  hooks.metrics_csv = &csv;
  std::vector<std::int64_t> checkpoints;
  hooks.on_checkpoint = [&](std::int64_t s) { checkpoints.push_back(s); };
  tc.checkpoint_every = 3;
  auto res = train(model, std::span<const TokenSequence>(data), tc, st, SpecialIds{}, hooks);
  auto lines = testing::lines_of(csv.str());
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "step,lr,loss");
  EXPECT_EQ(res.metrics.size(), 8u);
  EXPECT_EQ(st.step, 8);
  EXPECT_EQ(res.epoch_loss.size(), 2u);
  EXPECT_EQ(checkpoints, (std::vector<std::int64_t>{3, 6, 8}));
}

TEST(Trainer, RejectsTinyDataset) {
  auto data = toy_data(2, 8, 3);
  auto model = Encoder<float>::initialize(tiny_config());
  TrainConfig tc;
  tc.micro_batch = 4;
  auto st = OptimizerState<float>::for_gradients(model.zero_gradients());
  EXPECT_THROW(train(model, std::span<const TokenSequence>(data), tc, st, SpecialIds{}), Error);
}

TEST(Trainer, RunsAreDeterministicAcrossThreadCounts) {
  auto data = toy_data(12, 10, 4);
  TrainConfig tc;
  tc.micro_batch = 4;
  tc.epochs = 3;
  tc.peak_lr = 3e-3;
  tc.seed = 11;
  auto run = [&](const char* threads) {
    setenv("MDLM_THREADS", threads, 1);
    auto model = Encoder<float>::initialize(tiny_config());
    attach_lora(model, LoraConfig{}, 3);
    auto st = OptimizerState<float>::for_gradients(model.zero_gradients());
    std::ostringstream csv;
    TrainHooks hooks;
    hooks.metrics_csv = &csv;
    train(model, std::span<const TokenSequence>(data), tc, st, SpecialIds{}, hooks);
    return std::make_pair(csv.str(), model.adapter()->tensors);
  };
  auto one = run("1");
  auto four = run("4");
  unsetenv("MDLM_THREADS");
  EXPECT_EQ(one.first, four.first);
  for (const auto& [name, m] : one.second) EXPECT_TRUE(m == four.second.at(name)) << name;
}

// Sixteen sequences, each identifiable from any single visible token:
// sequence i alternates symbols i and (i + 5) mod 16.
TEST(Trainer, OverfitsSmallSet) {
  auto cfg = tiny_config(24, 32);
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_ffn = 64;
  std::vector<TokenSequence> data;
  for (int i = 0; i < 16; ++i) {
    std::vector<TokenId> ids;
    for (int j = 0; j < 32; ++j) ids.push_back(8 + (j % 2 == 0 ? i : (i + 5) % 16));
    data.push_back(TokenSequence::plain(ids));
  }
  auto model = Encoder<float>::initialize(cfg);
  TrainConfig tc;
  tc.phase = TrainPhase::Base;
  tc.micro_batch = 8;
  tc.epochs = 500;
  tc.peak_lr = 3e-3;
  tc.adam.weight_decay = 0.0;
  auto st = OptimizerState<float>::for_gradients(model.zero_gradients());
  auto res = train(model, std::span<const TokenSequence>(data), tc, st, SpecialIds{});
  EXPECT_GT(res.epoch_loss.front(), 1.0);
  EXPECT_LT(res.epoch_loss.back(), 0.1);
}

}  // namespace
}  // namespace mdlm
