// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdlm/common.hpp"
#include "mdlm/parallel.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/vocab.hpp"

namespace mdlm {

struct CorpusRecord {
  std::string text;
  std::string source;
  std::size_t token_len = 0;

  bool operator==(const CorpusRecord&) const = default;
};

struct SourceStats {
  std::string source;
  std::size_t before_filter = 0;
  std::size_t after_filter = 0;
  std::size_t sampled = 0;

  double filtered_fraction() const {
    return before_filter == 0 ? 0.0 : 1.0 - static_cast<double>(after_filter) / static_cast<double>(before_filter);
  }
};

struct CurationReport {
  std::vector<SourceStats> sources;
  std::size_t encyclopedic_total = 0;
  std::size_t web_news_pool = 0;
  std::size_t web_news_sampled = 0;
  std::size_t total = 0;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;

  void write(std::ostream& os) const {
    os << "[curation]\nmax_len = " << max_len << "\nseed = " << seed << "\nencyclopedic = " << encyclopedic_total
       << "\nweb_news_pool = " << web_news_pool << "\nweb_news_sampled = " << web_news_sampled
       << "\ntotal = " << total << '\n';
    for (const auto& s : sources) {
      os << "[source." << s.source << "]\nbefore_filter = " << s.before_filter << "\nafter_filter = " << s.after_filter
         << "\nsampled = " << s.sampled << "\nfiltered_fraction = " << s.filtered_fraction() << '\n';
    }
  }
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

/// Tags texts with a source label and their length under the vocabulary.
inline std::vector<CorpusRecord> make_records(const Vocabulary& vocab, std::span<const std::string> texts,
                                              const std::string& source) {
  std::vector<CorpusRecord> out(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    out[i] = CorpusRecord{texts[i], source, vocab.encode(texts[i]).size()};
  });
  return out;
}

/// Keeps records with token_len <= max_len, preserving order.
inline std::vector<CorpusRecord> filter_by_length(std::span<const CorpusRecord> records, std::size_t max_len) {
  if (max_len == 0) throw Error("max_len must be positive");
  std::vector<CorpusRecord> out;
  for (const auto& r : records) {
    if (r.token_len <= max_len) out.push_back(r);
  }
  return out;
}

/// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

/// Concatenates pools, permutes with the seed, and keeps the first n.
inline std::vector<CorpusRecord> merge_shuffle_sample(std::span<const std::vector<CorpusRecord>> pools, std::size_t n,
                                                      std::uint64_t seed) {
  std::vector<const CorpusRecord*> merged;
  for (const auto& pool : pools) {
    for (const auto& r : pool) merged.push_back(&r);
  }
  if (n > merged.size()) {
    throw Error("cannot sample " + std::to_string(n) + " records from a pool of " + std::to_string(merged.size()));
  }
  const auto perm = seeded_permutation(merged.size(), seed);
  std::vector<CorpusRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(*merged[perm[i]]);
  return out;
}

struct CurationResult {
  std::vector<CorpusRecord> records;
  CurationReport report;
};

/// filter(encyclopedic) followed by a seeded sample of the filtered web/news
/// pools.
inline CurationResult assemble_corpus(std::span<const CorpusRecord> encyclopedic,
                                      std::span<const std::vector<CorpusRecord>> web_news, std::size_t n_sample,
                                      std::size_t max_len, std::uint64_t seed) {
  if (encyclopedic.empty() && web_news.empty()) throw Error("no input records");
  CurationResult out;
  auto& rep = out.report;
  rep.max_len = max_len;
  rep.seed = seed;

  auto stats_for = [&](const std::string& source) -> SourceStats& {
    for (auto& s : rep.sources) {
      if (s.source == source) return s;
    }
    rep.sources.push_back(SourceStats{source});
    return rep.sources.back();
  };

  auto kept_ency = filter_by_length(encyclopedic, max_len);
  for (const auto& r : encyclopedic) ++stats_for(r.source).before_filter;
  for (const auto& r : kept_ency) ++stats_for(r.source).after_filter;

  std::vector<std::vector<CorpusRecord>> filtered;
  for (const auto& pool : web_news) {
    for (const auto& r : pool) ++stats_for(r.source).before_filter;
    filtered.push_back(filter_by_length(pool, max_len));
    for (const auto& r : filtered.back()) ++stats_for(r.source).after_filter;
    rep.web_news_pool += filtered.back().size();
  }
  auto sampled = merge_shuffle_sample(filtered, n_sample, seed);
  for (const auto& r : sampled) ++stats_for(r.source).sampled;
  for (const auto& r : kept_ency) ++stats_for(r.source).sampled;

  rep.encyclopedic_total = kept_ency.size();
  rep.web_news_sampled = sampled.size();
  out.records = std::move(kept_ency);
  out.records.insert(out.records.end(), std::make_move_iterator(sampled.begin()), std::make_move_iterator(sampled.end()));
  rep.total = out.records.size();
  return out;
}

/// One record per line as `source<TAB>text`.
inline void write_manifest(std::ostream& os, std::span<const CorpusRecord> records) {
  for (const auto& r : records) os << r.source << '\t' << r.text << '\n';
}

inline std::vector<CorpusRecord> read_manifest(const std::string& path, const Vocabulary* vocab = nullptr) {
  std::vector<CorpusRecord> out;
  for (auto& line : read_lines(path)) {
    auto tab = line.find('\t');
    CorpusRecord r;
    if (tab == std::string::npos) {
      r.text = std::move(line);
    } else {
      r.source = line.substr(0, tab);
      r.text = line.substr(tab + 1);
    }
    if (vocab) r.token_len = vocab->encode(r.text).size();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mdlm
