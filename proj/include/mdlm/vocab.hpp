// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdlm/common.hpp"

namespace mdlm {

enum class Region : std::uint8_t { Plain, Prompt, Response };

/// Token ids plus per-position mask flags and region labels. The three
/// vectors always have equal length.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<bool> masked;
  std::vector<Region> region;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  void push_back(TokenId id, Region r = Region::Plain, bool is_masked = false) {
    ids.push_back(id);
    masked.push_back(is_masked);
    region.push_back(r);
  }

  static TokenSequence plain(std::vector<TokenId> ids) {
    TokenSequence s;
    s.masked.assign(ids.size(), false);
    s.region.assign(ids.size(), Region::Plain);
    s.ids = std::move(ids);
    return s;
  }

  std::size_t count(Region r) const { return static_cast<std::size_t>(std::count(region.begin(), region.end(), r)); }

  /// Checks the length and masked => MASK invariants.
  void validate(TokenId mask_id) const {
    if (masked.size() != ids.size() || region.size() != ids.size()) {
      throw Error("token sequence vectors have mismatched lengths");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (masked[i] && ids[i] != mask_id) throw Error("masked position does not hold the mask token");
    }
  }

  bool operator==(const TokenSequence&) const = default;
};

/// Reserved ids. A built vocabulary always places them at 0..7 in this
/// order; models trained outside a Vocabulary may supply their own layout.
struct SpecialIds {
  TokenId mask = 0;
  TokenId pad = 1;
  TokenId bos = 2;
  TokenId eos = 3;
  TokenId unk = 4;
  TokenId instr_open = 5;
  TokenId instr_close = 6;
  TokenId resp_open = 7;
};

inline constexpr std::size_t kSpecialCount = 8;

inline constexpr std::array<std::string_view, kSpecialCount> kSpecialTokens = {
    "<mask>", "<pad>", "<bos>", "<eos>", "<unk>", "<instr>", "</instr>", "<resp>"};

inline constexpr std::array<std::string_view, kSpecialCount> kSpecialKeys = {
    "mask", "pad", "bos", "eos", "unk", "instr_open", "instr_close", "resp_open"};

enum class TokenizerMode { Char, Word };

inline std::string_view to_string(TokenizerMode m) { return m == TokenizerMode::Char ? "char" : "word"; }

inline TokenizerMode parse_tokenizer_mode(std::string_view s) {
  if (s == "char") return TokenizerMode::Char;
  if (s == "word") return TokenizerMode::Word;
  throw Error("unknown tokenizer mode: " + std::string(s));
}

/// Splits UTF-8 text into code-point substrings. Malformed bytes become
/// single-byte symbols so the split is total.
inline std::vector<std::string_view> split_utf8(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = lead < 0xF0 ? 3 : 1;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Specials first, then the most frequent symbols until max_size tokens.
  /// Frequency ties keep first-occurrence order.
  static Vocabulary build(std::span<const std::string> corpus, TokenizerMode mode, std::size_t max_size) {
    if (max_size <= kSpecialCount) {
      throw Error("max_size must exceed the " + std::to_string(kSpecialCount) + " special tokens");
    }
    struct Count {
      std::size_t freq = 0;
      std::size_t first = 0;
    };
    std::unordered_map<std::string, Count> counts;
    std::vector<std::string> order;
    bool any_text = false;
    for (const auto& line : corpus) {
      for (auto sym : symbolize(line, mode)) {
        any_text = true;
        if (is_special_string(sym)) continue;
        auto [it, inserted] = counts.try_emplace(std::string(sym), Count{0, order.size()});
        if (inserted) order.emplace_back(sym);
        ++it->second.freq;
      }
    }
    if (!any_text) throw Error("cannot build a vocabulary from an empty corpus");

    std::vector<const std::string*> ranked;
    ranked.reserve(order.size());
    for (const auto& s : order) ranked.push_back(&s);
    std::stable_sort(ranked.begin(), ranked.end(), [&](const std::string* a, const std::string* b) {
      return counts.at(*a).freq > counts.at(*b).freq;
    });

    Vocabulary v;
    v.mode_ = mode;
    for (auto s : kSpecialTokens) v.append(std::string(s));
    for (const auto* s : ranked) {
      if (v.tokens_.size() >= max_size) break;
      v.append(*s);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  TokenizerMode mode() const { return mode_; }
  const SpecialIds& specials() const { return specials_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Id of a regular (non-special) symbol.
  std::optional<TokenId> find(std::string_view symbol) const {
    auto it = id_of_.find(std::string(symbol));
    if (it == id_of_.end()) return std::nullopt;
    return it->second;
  }

  bool is_special(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < kSpecialCount; }

  /// Raw text to PLAIN ids; unknown symbols become UNK and special strings in
  /// the text are never mapped to their reserved ids.
  TokenSequence encode(std::string_view text) const {
    TokenSequence out;
    for (auto sym : symbolize(text, mode_)) {
      auto id = find(sym);
      out.push_back(id ? *id : specials_.unk);
    }
    return out;
  }

  std::vector<TokenId> encode_ids(std::string_view text) const { return encode(text).ids; }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (mode_ == TokenizerMode::Word && i > 0) out += ' ';
      out += token(ids[i]);
    }
    return out;
  }

  /// Decodes up to (not including) the first EOS, dropping other specials.
  std::string decode_text(std::span<const TokenId> ids) const {
    std::vector<TokenId> kept;
    for (TokenId id : ids) {
      if (id == specials_.eos) break;
      if (!is_special(id)) kept.push_back(id);
    }
    return decode(kept);
  }

  void save(std::ostream& os) const {
    os << "# mdlm vocabulary\n[header]\nversion = 1\nmode = " << to_string(mode_) << "\nsize = " << tokens_.size()
       << "\n[specials]\n";
    const std::array<TokenId, kSpecialCount> ids = special_array();
    for (std::size_t i = 0; i < kSpecialCount; ++i) os << kSpecialKeys[i] << " = " << ids[i] << '\n';
    os << "[tokens]\n";
    for (const auto& t : tokens_) os << escape(t) << '\n';
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write vocabulary file: " + path);
    save(os);
  }

  static Vocabulary load(std::istream& is) {
    Vocabulary v;
    std::string line;
    std::string section;
    std::size_t declared_size = 0;
    std::array<TokenId, kSpecialCount> ids{};
    std::array<bool, kSpecialCount> seen{};
    std::vector<std::string> tokens;
    while (std::getline(is, line)) {
      if (section != "tokens") {
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
          section = line.substr(1, line.size() - 2);
          continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("malformed vocabulary line: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section == "header") {
          if (key == "mode") v.mode_ = parse_tokenizer_mode(value);
          if (key == "size") declared_size = std::stoul(value);
        } else if (section == "specials") {
          for (std::size_t i = 0; i < kSpecialCount; ++i) {
            if (key == kSpecialKeys[i]) {
              ids[i] = static_cast<TokenId>(std::stol(value));
              seen[i] = true;
            }
          }
        }
      } else {
        tokens.push_back(unescape(line));
      }
    }
    if (tokens.size() != declared_size) throw Error("vocabulary size mismatch: header says " + std::to_string(declared_size));
    for (std::size_t i = 0; i < kSpecialCount; ++i) {
      if (!seen[i]) throw Error("vocabulary is missing special id: " + std::string(kSpecialKeys[i]));
      if (ids[i] != static_cast<TokenId>(i) || tokens.at(i) != kSpecialTokens[i]) {
        throw Error("unsupported special-token layout for " + std::string(kSpecialKeys[i]));
      }
    }
    for (auto& t : tokens) v.append(std::move(t));
    return v;
  }

  static Vocabulary load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read vocabulary file: " + path);
    return load(is);
  }

  bool operator==(const Vocabulary& o) const { return mode_ == o.mode_ && tokens_ == o.tokens_; }

 private:
  static std::vector<std::string_view> symbolize(std::string_view text, TokenizerMode mode) {
    return mode == TokenizerMode::Char ? split_utf8(text) : split_words(text);
  }

  static bool is_special_string(std::string_view s) {
    return std::find(kSpecialTokens.begin(), kSpecialTokens.end(), s) != kSpecialTokens.end();
  }

  std::array<TokenId, kSpecialCount> special_array() const {
    return {specials_.mask, specials_.pad,        specials_.bos,         specials_.eos,
            specials_.unk,  specials_.instr_open, specials_.instr_close, specials_.resp_open};
  }

  void append(std::string token) {
    const auto id = static_cast<TokenId>(tokens_.size());
    if (tokens_.size() >= kSpecialCount) {
      if (!id_of_.emplace(token, id).second) throw Error("duplicate token in vocabulary: " + token);
    }
    tokens_.push_back(std::move(token));
  }

  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::string escape(const std::string& t) {
    std::string out;
    for (char c : t) {
      switch (c) {
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        case ' ': out += "\\s"; break;
        default: out += c;
      }
    }
    return out;
  }

  static std::string unescape(const std::string& t) {
    std::string out;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != '\\' || i + 1 == t.size()) {
        out += t[i];
        continue;
      }
      switch (t[++i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 's': out += ' '; break;
        default: out += t[i];
      }
    }
    return out;
  }

  TokenizerMode mode_ = TokenizerMode::Char;
  SpecialIds specials_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
};

/// INSTR_OPEN · instruction · INSTR_CLOSE · RESP_OPEN · response · EOS.
/// The response tail is truncated to fit max_len; EOS is always last.
/// With `response_len` > 0 the response region is filled out to that many
/// tokens with extra EOS (still capped by max_len), so a model learns to emit
/// EOS into the unused tail of a fixed-length generation window.
inline TokenSequence format_sft_pair(const Vocabulary& v, std::string_view instruction, std::string_view response,
                                     std::size_t max_len, std::size_t response_len = 0) {
  const auto& sp = v.specials();
  const auto instr = v.encode_ids(instruction);
  const std::size_t scaffold = instr.size() + 3;
  if (scaffold + 1 > max_len) {
    throw Error("instruction needs " + std::to_string(scaffold + 1) + " tokens, exceeding max_len " +
                std::to_string(max_len));
  }
  TokenSequence out;
  out.push_back(sp.instr_open, Region::Prompt);
  for (TokenId id : instr) out.push_back(id, Region::Prompt);
  out.push_back(sp.instr_close, Region::Prompt);
  out.push_back(sp.resp_open, Region::Prompt);
  auto resp = v.encode_ids(response);
  const std::size_t room = max_len - scaffold - 1;
  if (resp.size() > room) resp.resize(room);
  for (TokenId id : resp) out.push_back(id, Region::Response);
  out.push_back(sp.eos, Region::Response);
  while (out.count(Region::Response) < response_len && out.size() < max_len) out.push_back(sp.eos, Region::Response);
  return out;
}

/// The prompt half of format_sft_pair, used to condition generation.
inline TokenSequence format_sft_prompt(const Vocabulary& v, std::string_view instruction) {
  const auto& sp = v.specials();
  TokenSequence out;
  out.push_back(sp.instr_open, Region::Prompt);
  for (TokenId id : v.encode_ids(instruction)) out.push_back(id, Region::Prompt);
  out.push_back(sp.instr_close, Region::Prompt);
  out.push_back(sp.resp_open, Region::Prompt);
  return out;
}

}  // namespace mdlm
