// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdlm/corpus.hpp"

namespace mdlm {
namespace {

std::vector<CorpusRecord> pool(const std::string& source, std::size_t n, std::size_t len = 10) {
  std::vector<CorpusRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({source + "-" + std::to_string(i), source, len});
  return out;
}

TEST(Corpus, LengthFilterBoundaryIsInclusive) {
  std::vector<CorpusRecord> r = {{"a", "s", 100}, {"b", "s", 512}, {"c", "s", 513}};
  auto kept = filter_by_length(r, 512);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].text, "a");
  EXPECT_EQ(kept[1].text, "b");
  EXPECT_TRUE(filter_by_length({}, 512).empty());
  EXPECT_THROW(filter_by_length(r, 0), Error);
}

TEST(Corpus, LengthFilterIsIdempotent) {
  std::vector<CorpusRecord> r;
  for (std::size_t i = 0; i < 50; ++i) r.push_back({std::to_string(i), "s", (i * 37) % 100});
  auto once = filter_by_length(r, 40);
  EXPECT_EQ(filter_by_length(once, 40), once);
}

TEST(Corpus, AllFilteredIsReported) {
  auto ency = pool("wiki", 3, 600);
  std::vector<std::vector<CorpusRecord>> web;
  auto res = assemble_corpus(ency, web, 0, 512, 1);
  EXPECT_TRUE(res.records.empty());
  ASSERT_EQ(res.report.sources.size(), 1u);
  EXPECT_DOUBLE_EQ(res.report.sources[0].filtered_fraction(), 1.0);
}

TEST(Corpus, SampleAllIsAPermutation) {
  std::vector<std::vector<CorpusRecord>> pools = {pool("a", 10), pool("b", 10)};
  auto out = merge_shuffle_sample(pools, 20, 3);
  std::set<std::string> texts;
  for (const auto& r : out) texts.insert(r.text);
  EXPECT_EQ(texts.size(), 20u);
  EXPECT_EQ(merge_shuffle_sample(pools, 20, 3), out);
  EXPECT_NE(merge_shuffle_sample(pools, 20, 4), out);
  EXPECT_THROW(merge_shuffle_sample(pools, 21, 3), Error);
}

// Hypergeometric draw of n from pools of sizes K and N-K: the count from the
// first pool has mean n K / N and variance n (K/N) ((N-K)/N) (N-n)/(N-1).
TEST(Corpus, SampleSourceMixIsHypergeometric) {
  const double N = 1500, K = 600, n = 1000;
  const double mean = n * K / N;
  const double sd = std::sqrt(n * (K / N) * ((N - K) / N) * (N - n) / (N - 1));
  EXPECT_NEAR(mean, 400.0, 1e-12);
  EXPECT_NEAR(sd, 8.9473, 1e-3);

  std::vector<std::vector<CorpusRecord>> pools = {pool("a", 600), pool("b", 900)};
  const int seeds = 200;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < seeds; ++s) {
    auto out = merge_shuffle_sample(pools, 1000, static_cast<std::uint64_t>(s));
    double count = 0;
    for (const auto& r : out) count += r.source == "a";
    EXPECT_LE(std::abs(count - mean), 4.5 * sd) << "seed " << s;
    sum += count;
    sum_sq += count * count;
  }
  const double emp_mean = sum / seeds;
  const double emp_sd = std::sqrt(sum_sq / seeds - emp_mean * emp_mean);
  EXPECT_LE(std::abs(emp_mean - mean), 3.0 * sd / std::sqrt(seeds));
  EXPECT_NEAR(emp_sd / sd, 1.0, 0.2);
}

TEST(Corpus, SeededPermutationIsUniformOnThree) {
  std::map<std::vector<std::size_t>, int> counts;
  const int trials = 6000;
  for (int s = 0; s < trials; ++s) ++counts[seeded_permutation(3, static_cast<std::uint64_t>(s))];
  ASSERT_EQ(counts.size(), 6u);
  // Each of 6 outcomes: mean 1000, sd sqrt(6000 * 1/6 * 5/6) ~ 28.9.
  for (const auto& [perm, c] : counts) EXPECT_NEAR(c, 1000, 3 * 28.9);
}

TEST(Corpus, AssembleMirrorsCompositionAtDeskScale) {
  auto ency = pool("wiki", 406);
  std::vector<std::vector<CorpusRecord>> web = {pool("news", 1000), pool("web", 1200)};
  web[1][0].token_len = 600;  // one overlong web record
  auto res = assemble_corpus(ency, web, 1600, 512, 9);
  EXPECT_EQ(res.records.size(), 2006u);
  EXPECT_EQ(res.report.total, res.records.size());
  EXPECT_EQ(res.report.encyclopedic_total, 406u);
  EXPECT_EQ(res.report.web_news_pool, 2199u);
  EXPECT_EQ(res.report.web_news_sampled, 1600u);
  std::size_t sampled = 0;
  for (const auto& s : res.report.sources) {
    EXPECT_LE(s.sampled, s.after_filter) << s.source;
    sampled += s.sampled;
  }
  EXPECT_EQ(sampled, 2006u);
  std::set<std::string> texts;
  for (const auto& r : res.records) texts.insert(r.text);
  EXPECT_EQ(texts.size(), res.records.size());
}

TEST(Corpus, ZeroSampleKeepsEncyclopedicOnly) {
  auto ency = pool("wiki", 5);
  std::vector<std::vector<CorpusRecord>> web = {pool("news", 7)};
  auto res = assemble_corpus(ency, web, 0, 512, 1);
  EXPECT_EQ(res.records, ency);
}

TEST(Corpus, ManifestIsDeterministicAndRoundTrips) {
  auto vocab = Vocabulary::build(std::vector<std::string>{"abc"}, TokenizerMode::Char, 32);
  std::vector<std::string> texts = {"abc", "cab", "aaaaaaaaaaaaaaaa", "b"};
  auto ency = make_records(vocab, texts, "wiki");
  EXPECT_EQ(ency[2].token_len, 16u);
  std::vector<std::vector<CorpusRecord>> web = {make_records(vocab, texts, "web")};
  auto a = assemble_corpus(ency, web, 2, 8, 42);
  auto b = assemble_corpus(ency, web, 2, 8, 42);
  std::ostringstream ma, mb;
  write_manifest(ma, a.records);
  write_manifest(mb, b.records);
  EXPECT_EQ(ma.str(), mb.str());

  const auto path = ::testing::TempDir() + "manifest.tsv";
  {
    std::ofstream os(path);
    os << ma.str();
  }
  auto back = read_manifest(path, &vocab);
  EXPECT_EQ(back, a.records);
}

TEST(Corpus, ReadLinesSkipsBlanks) {
  const auto path = ::testing::TempDir() + "lines.txt";
  {
    std::ofstream os(path);
    os << "one\n\ntwo\r\n";
  }
  EXPECT_EQ(read_lines(path), (std::vector<std::string>{"one", "two"}));
  EXPECT_THROW(read_lines(path + ".missing"), Error);
}

}  // namespace
}  // namespace mdlm
