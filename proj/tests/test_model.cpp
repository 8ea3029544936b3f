// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"

namespace mdlm {
namespace {

using testing::random_plain;
using testing::tiny_config;

TEST(Model, LogitsShapeAndSoftmaxNormalization) {
  auto model = Encoder<float>::initialize(tiny_config());
  Rng rng(1);
  for (std::size_t len : {1u, 5u, 16u}) {
    auto seq = random_plain(len, 12, rng);
    auto logits = model.forward(seq);
    ASSERT_EQ(logits.rows(), static_cast<Eigen::Index>(len));
    ASSERT_EQ(logits.cols(), 12);
    auto p = softmax(logits);
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0f, 1e-6f);
  }
}

TEST(Model, RejectsTooLongAndOutOfRange) {
  auto model = Encoder<float>::initialize(tiny_config(12, 8));
  Rng rng(2);
  EXPECT_THROW(model.forward(random_plain(9, 12, rng)), Error);
  EXPECT_THROW(model.forward(TokenSequence::plain({1, 12})), Error);
  EXPECT_THROW(model.forward(TokenSequence::plain({-1})), Error);
}

TEST(Model, InitIsDeterministicAndFollowsContract) {
  auto a = init_parameters<float>(tiny_config());
  auto b = init_parameters<float>(tiny_config());
  for (const auto& [name, m] : a) {
    EXPECT_TRUE(m == b.at(name)) << name;
    if (name.ends_with(".scale")) EXPECT_TRUE((m.array() == 1.0f).all()) << name;
    if (name.ends_with(".shift") || name.find(".b_") != std::string::npos || name == "head.b") {
      EXPECT_TRUE((m.array() == 0.0f).all()) << name;
    }
  }
  // Sample mean of a 64x64 projection: sd of the mean is 0.02 / 64.
  ModelConfig big = tiny_config();
  big.d_model = 64;
  big.n_heads = 4;
  auto p = init_parameters<double>(big);
  const auto& w = p.at("layers.0.attn.W_q");
  EXPECT_LT(std::abs(w.mean()), 3.0 * 0.02 / 64.0);
  const double var = (w.array() - w.mean()).square().mean();
  EXPECT_NEAR(std::sqrt(var), 0.02, 0.002);
}

TEST(Model, TensorNamesAreFlatAndUnique) {
  auto p = init_parameters<float>(tiny_config());
  auto names = p.names();
  auto sorted = names;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_TRUE(p.contains("layers.1.attn.W_o"));
  EXPECT_TRUE(p.contains("layers.0.mlp.W_down"));
}

TEST(Model, Bidirectional) {
  auto model = Encoder<double>::initialize(tiny_config());
  testing::jitter(model.parameters(), 0.2, 3);
  auto seq = TokenSequence::plain({8, 9, 10, 11});
  auto base = model.forward(seq);
  seq.ids[3] = 5;  // change a later position
  auto changed = model.forward(seq);
  EXPECT_GT((base.row(0) - changed.row(0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Model, PermutationEquivariantWithoutPositions) {
  auto model = Encoder<double>::initialize(tiny_config());
  testing::jitter(model.parameters(), 0.2, 4);
  model.parameters().at("pos_emb").setZero();
  auto seq = TokenSequence::plain({8, 9, 10, 11, 6});
  auto base = model.forward(seq);
  auto swapped = seq;
  std::swap(swapped.ids[1], swapped.ids[3]);
  auto out = model.forward(swapped);
  EXPECT_LT((out.row(1) - base.row(3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.row(3) - base.row(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.row(0) - base.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, PadKeysAreIgnored) {
  auto cfg = tiny_config();
  auto model = Encoder<double>::initialize(cfg);
  testing::jitter(model.parameters(), 0.2, 5);
  auto with_pad = TokenSequence::plain({8, 9, cfg.pad_id, 10});
  auto other_pad = with_pad;
  // Changing the embedding of PAD must not change other positions.
  auto before = model.forward(with_pad);
  model.parameters().at("tok_emb").row(cfg.pad_id).setConstant(3.0);
  auto after = model.forward(other_pad);
  for (int i : {0, 1, 3}) EXPECT_LT((before.row(i) - after.row(i)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, ZeroLossGradientGivesZeroGradients) {
  auto model = Encoder<double>::initialize(tiny_config());
  Rng rng(6);
  auto seq = random_plain(6, 12, rng);
  ForwardCache<double> cache;
  auto logits = model.forward(seq, cache, nullptr);
  auto grads = model.zero_gradients();
  model.backward(seq, cache, Matrix<double>::Zero(logits.rows(), logits.cols()), grads);
  for (const auto& [name, g] : grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0) << name;
}

TEST(Model, AbsentTokenEmbeddingRowHasZeroGradient) {
  auto model = Encoder<double>::initialize(tiny_config());
  auto seq = TokenSequence::plain({8, 9, 10});
  ForwardCache<double> cache;
  auto logits = model.forward(seq, cache, nullptr);
  Matrix<double> dlogits;
  masked_ce(logits, seq.ids, std::vector<bool>{true, true, true}, &dlogits);
  auto grads = model.zero_gradients();
  model.backward(seq, cache, dlogits, grads);
  EXPECT_EQ(grads.at("tok_emb").row(11).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(grads.at("tok_emb").row(8).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grads.at("pos_emb").row(5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, BackwardRejectsMismatchedInputs) {
  auto model = Encoder<double>::initialize(tiny_config());
  auto seq = TokenSequence::plain({8, 9, 10});
  ForwardCache<double> cache;
  auto logits = model.forward(seq, cache, nullptr);
  auto other = TokenSequence::plain({8, 9, 11});
  auto grads = model.zero_gradients();
  EXPECT_THROW(model.backward(other, cache, logits, grads), Error);
}

// Central finite differences against the analytic gradient of the masked
// CE sum, in double precision.
TEST(Model, GradientMatchesFiniteDifferences) {
  auto model = Encoder<double>::initialize(tiny_config());
  testing::jitter(model.parameters(), 0.1, 8);
  Rng rng(9);
  auto seq = random_plain(7, 12, rng);
  std::vector<bool> masked = {true, false, true, true, false, true, false};
  std::vector<TokenId> targets = {3, 0, 5, 7, 1, 2, 0};
  auto loss = [&] { return masked_ce(model.forward(seq), targets, masked).sum; };

  ForwardCache<double> cache;
  auto logits = model.forward(seq, cache, nullptr);
  Matrix<double> dlogits;
  masked_ce(logits, targets, masked, &dlogits);
  auto grads = model.zero_gradients();
  model.backward(seq, cache, dlogits, grads);

  const double eps = 1e-4;
  double worst = 0.0;
  auto names = grads.names();
  Rng pick(10);
  for (int k = 0; k < 60; ++k) {
    const auto& name = names[pick.below(names.size())];
    auto& w = model.parameters().at(name);
    Eigen::Index idx;
    if (name == "tok_emb") {
      idx = seq.ids[pick.below(seq.size())] * w.cols() + static_cast<Eigen::Index>(pick.below(w.cols()));
    } else if (name == "pos_emb") {
      idx = static_cast<Eigen::Index>(pick.below(seq.size())) * w.cols() + static_cast<Eigen::Index>(pick.below(w.cols()));
    } else {
      idx = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(w.size())));
    }
    const double orig = w.data()[idx];
    w.data()[idx] = orig + eps;
    const double up = loss();
    w.data()[idx] = orig - eps;
    const double down = loss();
    w.data()[idx] = orig;
    const double numeric = (up - down) / (2 * eps);
    const double analytic = grads.at(name).data()[idx];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-4) << name << "[" << idx << "] analytic=" << analytic << " numeric=" << numeric;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

}  // namespace
}  // namespace mdlm
