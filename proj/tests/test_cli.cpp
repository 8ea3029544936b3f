// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "test_support.hpp"

namespace mdlm {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "mdlm");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) / ("mdlm_cli_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::string text;
    for (int i = 0; i < 24; ++i) text += "kedi " + std::to_string(i % 7) + " evde uyur\n";
    spit(dir_ / "text.txt", text);
    std::string pairs;
    for (int i = 0; i < 8; ++i) pairs += "say " + std::to_string(i) + "\tok " + std::to_string(i) + "\n";
    spit(dir_ / "pairs.tsv", pairs);
    spit(dir_ / "tiny.ini",
         "[model]\nn_layers=1\nd_model=16\nn_heads=2\nd_ffn=32\nmax_positions=48\n"
         "[train]\nmicro_batch=4\npeak_lr=0.001\n");
  }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void build_vocab() {
    ASSERT_EQ(run({"vocab", "build", "--in", p("text.txt"), p("pairs.tsv"), "--out", p("v.txt")}).code, 0);
  }
  void train_base(std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"train", "base", "--vocab", p("v.txt"), "--data", p("text.txt"),
                                     "--config", p("tiny.ini"), "--out", p("base.mdlm")};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST(CliHash, Sha256OfKnownInput) {
  const auto path = ::testing::TempDir() + "abc.txt";
  spit(path, "abc");
  EXPECT_EQ(cli::sha256_file(path), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_THROW(cli::sha256_file(::testing::TempDir() + "absent.txt"), Error);
}

TEST_F(Cli, UnknownSubcommandFails) {
  EXPECT_NE(run({"frobnicate"}).code, 0);
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"train", "warp", "--data", p("text.txt"), "--out", p("x")}).code, 0);
  EXPECT_NE(run({"vocab", "build", "--out", p("v.txt")}).code, 0);  // --in missing
}

TEST_F(Cli, RuntimeErrorsAreReported) {
  build_vocab();
  auto r = run({"train", "base", "--vocab", p("v.txt"), "--data", p("text.txt"), "--set", "model.ffn=8", "--out",
                p("x.mdlm")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("model.ffn"), std::string::npos) << r.err;
  r = run({"train", "base", "--data", p("text.txt"), "--out", p("x.mdlm")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--vocab"), std::string::npos) << r.err;
}

TEST_F(Cli, InspectListsEveryTensor) {
  auto model = Encoder<float>::initialize(testing::tiny_config());
  attach_lora(model, LoraConfig{}, 1);
  save_checkpoint<float>(p("m.mdlm"), model, nullptr);
  auto r = run({"inspect", "--ckpt", p("m.mdlm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto h = read_checkpoint_header(p("m.mdlm"));
  EXPECT_FALSE(h.tensors.empty());
  for (const auto& t : h.tensors) {
    const auto line = t.name + " f32 " + std::to_string(t.rows) + "x" + std::to_string(t.cols) + "\n";
    EXPECT_NE(r.out.find(line), std::string::npos) << line;
  }
  EXPECT_NE(r.out.find("lora.A."), std::string::npos);
  EXPECT_NE(r.out.find("d_model=16"), std::string::npos);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  build_vocab();
  train_base({"--steps", "3", "--lr", "0.002", "--set", "train.seed=11"});
  const auto manifest = slurp(p("base.mdlm.manifest"));
  EXPECT_NE(manifest.find("[config.train]"), std::string::npos);
  EXPECT_NE(manifest.find("peak_lr=0.002\n"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("seed=11\n"), std::string::npos);
  // Values only in the file survive.
  EXPECT_NE(manifest.find("micro_batch=4\n"), std::string::npos);
  EXPECT_NE(manifest.find("d_model=16\n"), std::string::npos);
  EXPECT_NE(manifest.find(p("text.txt") + "=" + cli::sha256_file(p("text.txt"))), std::string::npos);
  EXPECT_NE(manifest.find(p("base.mdlm") + "=" + cli::sha256_file(p("base.mdlm"))), std::string::npos);
  auto h = read_checkpoint_header(p("base.mdlm"));
  EXPECT_EQ(get_setting<double>(h.settings, "train", "peak_lr", 0.0), 0.002);
  EXPECT_EQ(get_setting<std::string>(h.settings, "data", "vocab", ""), p("v.txt"));
}

TEST_F(Cli, ResumeAppendsMetrics) {
  build_vocab();
  train_base({"--steps", "4", "--checkpoint-every", "2"});
  const auto rows = testing::lines_of(slurp(p("base.mdlm.metrics.csv"))).size();
  EXPECT_EQ(rows, 5u);  // header plus four steps
  auto r = run({"train", "base", "--resume", p("base.mdlm"), "--data", p("text.txt"), "--steps", "6", "--out",
                p("base.mdlm")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(testing::lines_of(slurp(p("base.mdlm.metrics.csv"))).size(), 7u);
}

TEST_F(Cli, SmokeChain) {
  setenv("SOURCE_DATE_EPOCH", "1800000000", 1);
  build_vocab();
  ASSERT_EQ(run({"corpus", "prep", "--vocab", p("v.txt"), "--ency", p("text.txt"), "--web", p("text.txt"), "--sample",
                 "10", "--seed", "3", "--out", p("c.tsv")})
                .code,
            0);
  EXPECT_EQ(testing::lines_of(slurp(p("c.tsv"))).size(), 34u);
  auto r = run({"train", "cpt", "--vocab", p("v.txt"), "--config", p("tiny.ini"), "--data", p("c.tsv"), "--steps",
                "4", "--out", p("cpt.mdlm")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(p("cpt.mdlm.manifest")).find("trainable_fraction="), std::string::npos);
  r = run({"train", "sft", "--init", p("cpt.mdlm"), "--data", p("pairs.tsv"), "--stage", "1", "--steps", "2",
           "--response-len", "8", "--out", p("sft.mdlm")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto has_lora = [](const CheckpointHeader& h) {
    for (const auto& t : h.tensors) {
      if (t.name.starts_with("lora.")) return true;
    }
    return false;
  };
  EXPECT_TRUE(has_lora(read_checkpoint_header(p("cpt.mdlm"))));
  EXPECT_FALSE(has_lora(read_checkpoint_header(p("sft.mdlm"))));  // adapter merged before SFT
  r = run({"generate", "--ckpt", p("sft.mdlm"), "--prompt", "say 3", "--steps", "4", "--max-new-tokens", "8",
           "--block-len", "8", "--trace", p("trace.txt"), "--out", p("gen.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(testing::lines_of(slurp(p("trace.txt"))).size(), 4u);
  const auto gen_manifest = slurp(p("gen.txt.manifest"));
  EXPECT_NE(gen_manifest.find("forward_passes=4\n"), std::string::npos) << gen_manifest;
  EXPECT_NE(gen_manifest.find("prompt_format=sft\n"), std::string::npos);
  r = run({"eval", "ppl", "--ckpt", p("sft.mdlm"), "--corpus", p("text.txt"), "--seed", "2", "--out", p("e.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const double ppl = std::stod(r.out.substr(0, r.out.find('\n')));
  EXPECT_GT(ppl, 1.0);
  EXPECT_NE(r.out.find("\"docs\": 24"), std::string::npos);
  EXPECT_NE(slurp(p("e.txt.manifest")).find("started=2027-01-15T08:00:00Z\n"), std::string::npos);

  // Same inputs, same seeds: identical manifests.
  const auto first = slurp(p("gen.txt.manifest"));
  r = run({"generate", "--ckpt", p("sft.mdlm"), "--prompt", "say 3", "--steps", "4", "--max-new-tokens", "8",
           "--block-len", "8", "--trace", p("trace.txt"), "--out", p("gen.txt")});
  EXPECT_EQ(slurp(p("gen.txt.manifest")), first);
  unsetenv("SOURCE_DATE_EPOCH");
}

}  // namespace
}  // namespace mdlm
