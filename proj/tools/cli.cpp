// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <utility>

#include "mdlm/mdlm.hpp"

namespace mdlm::cli {

namespace fs = std::filesystem;

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot hash missing file: " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xF];
  }
  return hex;
}

namespace {

constexpr const char* kVersion = "0.1.0";

// SOURCE_DATE_EPOCH pins timestamps so manifests of identical reruns match.
std::string timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// One per run, written next to the primary output.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)), started_(timestamp()) {}

  void input(const std::string& path) { inputs_.emplace_back(path, sha256_file(path)); }
  void output(const std::string& path) { outputs_.emplace_back(path, sha256_file(path)); }
  void config(const Settings& s) { config_ = s; }
  template <typename V>
  void result(const std::string& key, const V& v) {
    results_.emplace_back(key, format_value(v));
  }
  void seed(std::uint64_t s) { seed_ = s; }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write manifest: " + path);
    os << "[run]\ncommand=" << command_ << "\nversion=" << kVersion << "\nseed=" << seed_ << "\nstarted=" << started_
       << "\nfinished=" << timestamp() << '\n';
    os << "[inputs]\n";
    for (const auto& [p, h] : inputs_) os << p << '=' << h << '\n';
    os << "[outputs]\n";
    for (const auto& [p, h] : outputs_) os << p << '=' << h << '\n';
    for (const auto& [section, keys] : config_) {
      os << "[config." << section << "]\n";
      for (const auto& [k, v] : keys) os << k << '=' << v.data() << '\n';
    }
    os << "[result]\n";
    for (const auto& [k, v] : results_) os << k << '=' << v << '\n';
  }

 private:
  std::string command_;
  std::string started_;
  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_, results_;
  Settings config_;
};

/// `section.key=value` overrides from repeated --set flags. Keys must already
/// exist in `known` so a typo fails loudly instead of being ignored.
void apply_sets(Settings& s, const Settings& known, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    const auto dot = kv.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw Error("--set expects section.key=value, got '" + kv + "'");
    }
    const auto section = kv.substr(0, dot), key = kv.substr(dot + 1, eq - dot - 1);
    if (!has_setting(known, section, key)) throw Error("unknown setting '" + section + "." + key + "'");
    s.put(settings_path(section, key), kv.substr(eq + 1));
  }
}

template <typename V>
void put_if(Settings& s, std::string_view section, std::string_view key, const std::optional<V>& v) {
  if (v) put_setting(s, section, key, *v);
}

Settings sections_of(const Settings& s, std::initializer_list<const char*> names) {
  Settings out;
  for (const char* n : names) {
    if (auto c = s.get_child_optional(n)) out.add_child(n, *c);
  }
  return out;
}

/// Text of each line; `source<TAB>text` manifest lines yield the text.
std::vector<std::string> corpus_texts(const std::string& path) {
  auto lines = read_lines(path);
  for (auto& l : lines) {
    const auto tab = l.find('\t');
    if (tab != std::string::npos) l = l.substr(tab + 1);
  }
  return lines;
}

std::vector<TokenSequence> plain_dataset(const Vocabulary& vocab, const std::string& path, std::size_t max_len,
                                         std::size_t& truncated) {
  std::vector<TokenSequence> out;
  for (const auto& text : corpus_texts(path)) {
    auto seq = vocab.encode(text);
    if (seq.empty()) continue;
    if (seq.size() > max_len) {
      seq.ids.resize(max_len);
      seq.masked.resize(max_len);
      seq.region.resize(max_len);
      ++truncated;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(path + ":" + std::to_string(n) + ": expected instruction<TAB>response");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

std::string manifest_path(const std::string& explicit_path, const std::string& output) {
  return explicit_path.empty() ? output + ".manifest" : explicit_path;
}

std::string vocab_path_for(const std::string& flag, const Settings& ckpt_settings) {
  if (!flag.empty()) return flag;
  auto p = get_setting<std::string>(ckpt_settings, "data", "vocab", "");
  if (p.empty()) throw Error("checkpoint does not name a vocabulary; pass --vocab");
  return p;
}

// --- vocab build -----------------------------------------------------------

struct VocabArgs {
  std::string mode = "char";
  std::size_t max_size = 512;
  std::vector<std::string> inputs;
  std::string out, manifest;
};

int cmd_vocab_build(const VocabArgs& a, std::ostream& out) {
  RunManifest m("vocab build");
  std::vector<std::string> texts;
  for (const auto& path : a.inputs) {
    m.input(path);
    for (const auto& line : read_lines(path)) {
      std::size_t start = 0;
      for (;;) {
        const auto tab = line.find('\t', start);
        texts.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
    }
  }
  auto v = Vocabulary::build(texts, parse_tokenizer_mode(a.mode), a.max_size);
  v.save_file(a.out);
  m.output(a.out);
  Settings cfg;
  put_setting(cfg, "vocab", "mode", a.mode);
  put_setting(cfg, "vocab", "max_size", a.max_size);
  m.config(cfg);
  m.result("size", v.size());
  m.write(manifest_path(a.manifest, a.out));
  out << "vocabulary of " << v.size() << " tokens written to " << a.out << '\n';
  return 0;
}

// --- corpus prep -----------------------------------------------------------

struct CorpusArgs {
  std::string vocab;
  std::vector<std::string> ency, web;
  std::size_t max_len = 512;
  std::size_t sample = 0;
  std::uint64_t seed = 0;
  std::string out, report, manifest;
};

int cmd_corpus_prep(const CorpusArgs& a, std::ostream& out) {
  RunManifest m("corpus prep");
  m.seed(a.seed);
  m.input(a.vocab);
  const auto vocab = Vocabulary::load_file(a.vocab);
  auto load = [&](const std::string& path) {
    m.input(path);
    return make_records(vocab, read_lines(path), fs::path(path).stem().string());
  };
  std::vector<CorpusRecord> ency;
  for (const auto& p : a.ency) {
    auto r = load(p);
    ency.insert(ency.end(), r.begin(), r.end());
  }
  std::vector<std::vector<CorpusRecord>> web;
  for (const auto& p : a.web) web.push_back(load(p));
  auto res = assemble_corpus(ency, web, a.sample, a.max_len, a.seed);
  {
    std::ofstream os(a.out, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + a.out);
    write_manifest(os, res.records);
  }
  const auto report = a.report.empty() ? a.out + ".report" : a.report;
  {
    std::ofstream os(report, std::ios::binary | std::ios::trunc);
    res.report.write(os);
  }
  m.output(a.out);
  m.output(report);
  Settings cfg;
  put_setting(cfg, "corpus", "max_len", a.max_len);
  put_setting(cfg, "corpus", "sample", a.sample);
  put_setting(cfg, "corpus", "seed", a.seed);
  m.config(cfg);
  m.result("total", res.report.total);
  m.result("encyclopedic", res.report.encyclopedic_total);
  m.result("web_news_sampled", res.report.web_news_sampled);
  m.write(manifest_path(a.manifest, a.out));
  out << "kept " << res.report.total << " records (" << res.report.encyclopedic_total << " encyclopedic + "
      << res.report.web_news_sampled << " sampled)\n";
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, vocab, init, resume, out, metrics, manifest;
  std::optional<int> stage, micro_batch, grad_accum, epochs, response_len, rank;
  std::optional<double> lr;
  std::optional<std::int64_t> steps, warmup_steps, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

int cmd_train(TrainPhase phase, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunManifest m("train " + std::string(to_string(phase)));

  std::optional<LoadedCheckpoint> ck;
  const std::string ck_path = !a.resume.empty() ? a.resume : a.init;
  if (!ck_path.empty()) {
    m.input(ck_path);
    ck = load_checkpoint(ck_path);
  }

  // defaults < resumed checkpoint < config file < flags
  Settings s;
  put_model_config(s, ModelConfig{});
  put_lora_config(s, LoraConfig{});
  put_train_config(s, TrainConfig{});
  put_setting(s, "train", "response_len", 0);
  if (!a.resume.empty()) overlay(s, sections_of(ck->header.settings, {"model", "lora", "train"}));
  if (!a.config.empty()) {
    m.input(a.config);
    overlay(s, load_settings(a.config));
  }
  Settings flags;
  put_if(flags, "train", "stage", a.stage);
  put_if(flags, "train", "micro_batch", a.micro_batch);
  put_if(flags, "train", "grad_accum", a.grad_accum);
  put_if(flags, "train", "epochs", a.epochs);
  put_if(flags, "train", "peak_lr", a.lr);
  put_if(flags, "train", "total_steps", a.steps);
  put_if(flags, "train", "warmup_steps", a.warmup_steps);
  put_if(flags, "train", "checkpoint_every", a.checkpoint_every);
  put_if(flags, "train", "seed", a.seed);
  put_if(flags, "train", "response_len", a.response_len);
  put_if(flags, "lora", "rank", a.rank);
  apply_sets(flags, s, a.sets);
  overlay(s, flags);
  put_setting(s, "train", "phase", std::string(to_string(phase)));

  TrainConfig tc = train_config_from(s);
  tc.validate();
  const LoraConfig lc = lora_config_from(s);
  const int response_len = get_setting(s, "train", "response_len", 0);
  m.seed(tc.seed);

  const std::string vocab_path = ck ? vocab_path_for(a.vocab, ck->header.settings) : a.vocab;
  if (vocab_path.empty()) throw Error("--vocab is required when training from scratch");
  m.input(vocab_path);
  const auto vocab = Vocabulary::load_file(vocab_path);

  Encoder<float> model = [&] {
    if (ck) return encoder_from_checkpoint<float>(*ck);
    ModelConfig mc = model_config_from(s);
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.pad_id = vocab.specials().pad;
    return Encoder<float>::initialize(mc);
  }();
  if (static_cast<std::size_t>(model.config().vocab_size) != vocab.size()) {
    throw Error("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                std::to_string(model.config().vocab_size));
  }
  OptimizerState<float> state;
  if (!a.resume.empty()) {
    if (phase == TrainPhase::Cpt && !model.has_adapter()) throw Error("resumed CPT checkpoint has no adapter");
    state = optimizer_from_checkpoint(*ck, model);
  } else {
    // An adapter from a previous phase is folded into the base weights.
    if (model.has_adapter()) merge_lora(model);
    if (phase == TrainPhase::Cpt) attach_lora(model, lc, tc.seed);
    state = OptimizerState<float>::for_gradients(model.zero_gradients());
  }

  m.input(a.data);
  const auto max_len = static_cast<std::size_t>(model.config().max_positions);
  std::vector<TokenSequence> data;
  std::size_t truncated = 0, rejected = 0;
  if (phase == TrainPhase::Sft) {
    for (const auto& [instr, resp] : read_pairs(a.data)) {
      try {
        data.push_back(format_sft_pair(vocab, instr, resp, max_len, static_cast<std::size_t>(response_len)));
      } catch (const Error&) {
        ++rejected;
      }
    }
  } else {
    data = plain_dataset(vocab, a.data, max_len, truncated);
  }
  if (data.empty()) throw Error("no usable training examples in " + a.data);

  Settings extra;
  put_train_config(extra, tc);
  put_setting(extra, "train", "response_len", response_len);
  put_setting(extra, "data", "vocab", vocab_path);

  const auto metrics_path = a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  const bool append = !a.resume.empty() && fs::exists(metrics_path);
  std::ofstream csv(metrics_path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!csv) throw Error("cannot write " + metrics_path);
  TrainHooks hooks;
  hooks.metrics_csv = &csv;
  hooks.write_csv_header = !append;
  hooks.log = [&](const std::string& msg) { err << msg << '\n'; };
  hooks.on_checkpoint = [&](std::int64_t) { save_checkpoint(a.out, model, &state, extra); };
  const auto res = train(model, std::span<const TokenSequence>(data), tc, state, vocab.specials(), hooks);
  csv.close();

  m.output(a.out);
  m.output(metrics_path);
  Settings snapshot = sections_of(s, {"model", "train"});
  if (phase == TrainPhase::Cpt) snapshot.add_child("lora", s.get_child("lora"));
  put_model_config(snapshot, model.config());
  m.config(snapshot);
  m.result("examples", data.size());
  m.result("rejected_pairs", rejected);
  m.result("truncated", truncated);
  m.result("steps", state.step);
  m.result("skipped_updates", res.skipped_updates);
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) m.result("epoch_loss." + std::to_string(e + 1), res.epoch_loss[e]);
  if (model.has_adapter()) m.result("trainable_fraction", trainable_fraction(model));
  m.write(manifest_path(a.manifest, a.out));

  out << "trained " << state.step << " steps on " << data.size() << " examples";
  if (!res.epoch_loss.empty()) out << ", last epoch loss " << format_value(res.epoch_loss.back());
  out << '\n';
  if (rejected > 0) out << rejected << " pairs rejected (instruction too long)\n";
  return 0;
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string ckpt, prompt, vocab, preset = "long", config, format = "auto", trace, out, manifest;
  std::optional<int> steps, max_new_tokens, block_len;
  std::optional<double> temp, rep_pen, cfg;
  std::optional<std::string> remask;
  std::optional<bool> stochastic;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  RunManifest m("generate");
  m.input(a.ckpt);
  const auto ck = load_checkpoint(a.ckpt);
  const auto model = encoder_from_checkpoint<float>(ck);
  const auto vocab_path = vocab_path_for(a.vocab, ck.header.settings);
  m.input(vocab_path);
  const auto vocab = Vocabulary::load_file(vocab_path);

  Settings s;
  if (a.preset == "long") {
    put_generator_config(s, GeneratorConfig::long_context());
  } else if (a.preset == "short") {
    put_generator_config(s, GeneratorConfig::short_context());
  } else {
    throw Error("unknown preset '" + a.preset + "' (expected long or short)");
  }
  if (!a.config.empty()) {
    m.input(a.config);
    overlay(s, sections_of(load_settings(a.config), {"generate"}));
  }
  Settings flags;
  put_if(flags, "generate", "steps", a.steps);
  put_if(flags, "generate", "max_new_tokens", a.max_new_tokens);
  put_if(flags, "generate", "block_len", a.block_len);
  put_if(flags, "generate", "temperature", a.temp);
  put_if(flags, "generate", "rep_penalty", a.rep_pen);
  put_if(flags, "generate", "cfg_scale", a.cfg);
  put_if(flags, "generate", "remask", a.remask);
  put_if(flags, "generate", "stochastic", a.stochastic);
  put_if(flags, "generate", "seed", a.seed);
  apply_sets(flags, s, a.sets);
  overlay(s, flags);
  const auto gc = generator_config_from(s);
  m.seed(gc.seed);

  bool sft = a.format == "sft";
  if (a.format == "auto") {
    sft = get_setting<std::string>(ck.header.settings, "train", "phase", "") == "sft";
  } else if (a.format != "sft" && a.format != "plain") {
    throw Error("unknown prompt format '" + a.format + "'");
  }
  TokenSequence prompt = sft ? format_sft_prompt(vocab, a.prompt) : vocab.encode(a.prompt);
  if (!sft) {
    for (auto& r : prompt.region) r = Region::Prompt;
  }

  const auto res = generate(model, prompt, gc, vocab.specials(), !a.trace.empty());
  const auto generated = res.generated();
  const auto text = vocab.decode_text(generated);
  const auto masks = std::count(res.sequence.ids.begin(), res.sequence.ids.end(), vocab.specials().mask);
  out << text << '\n';

  if (!a.trace.empty()) {
    std::ofstream os(a.trace, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + a.trace);
    for (const auto& st : res.trace) {
      os << st.step << '\t' << st.block << '\t'
         << render_state(vocab, std::span<const TokenId>(st.state).subspan(res.prompt_len)) << '\n';
    }
  }
  if (!a.out.empty()) {
    std::ofstream os(a.out, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + a.out);
    os << text << '\n';
  }
  const std::string mpath = !a.manifest.empty() ? a.manifest : (a.out.empty() ? "" : a.out + ".manifest");
  if (!mpath.empty()) {
    if (!a.out.empty()) m.output(a.out);
    if (!a.trace.empty()) m.output(a.trace);
    m.config(s);
    m.result("prompt", a.prompt);
    m.result("prompt_format", std::string(sft ? "sft" : "plain"));
    m.result("forward_passes", res.forward_passes);
    m.result("mask_tokens_remaining", static_cast<std::size_t>(masks));
    m.result("text", text);
    m.write(mpath);
  }
  return 0;
}

// --- eval ppl --------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, corpus, vocab, config, out, manifest;
  std::optional<double> mask_prob;
  std::optional<std::size_t> max_len;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunManifest m("eval ppl");
  m.input(a.ckpt);
  const auto ck = load_checkpoint(a.ckpt);
  const auto model = encoder_from_checkpoint<float>(ck);
  const auto vocab_path = vocab_path_for(a.vocab, ck.header.settings);
  m.input(vocab_path);
  const auto vocab = Vocabulary::load_file(vocab_path);

  Settings s;
  put_eval_config(s, EvalConfig{});
  if (!a.config.empty()) {
    m.input(a.config);
    overlay(s, sections_of(load_settings(a.config), {"eval"}));
  }
  Settings flags;
  put_if(flags, "eval", "mask_prob", a.mask_prob);
  put_if(flags, "eval", "max_len", a.max_len);
  put_if(flags, "eval", "seed", a.seed);
  put_if(flags, "eval", "num_rounds", a.rounds);
  overlay(s, flags);
  const auto ec = eval_config_from(s);
  m.seed(ec.seed);

  m.input(a.corpus);
  std::vector<TokenSequence> docs;
  for (const auto& text : corpus_texts(a.corpus)) {
    auto seq = vocab.encode(text);
    if (!seq.empty()) docs.push_back(std::move(seq));
  }
  const auto r = pseudo_perplexity(model, std::span<const TokenSequence>(docs), ec, vocab.specials());
  std::ostringstream summary;
  summary << "{\"docs\": " << r.docs << ", \"masked_tokens\": " << r.masked_tokens
          << ", \"mean_ce\": " << format_value(r.mean_ce) << ", \"ppl\": " << format_value(r.ppl) << "}";
  out << format_value(r.ppl) << '\n' << summary.str() << '\n';
  if (!a.out.empty()) {
    std::ofstream os(a.out, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + a.out);
    os << summary.str() << '\n';
  }
  const std::string mpath = !a.manifest.empty() ? a.manifest : (a.out.empty() ? "" : a.out + ".manifest");
  if (!mpath.empty()) {
    if (!a.out.empty()) m.output(a.out);
    m.config(s);
    m.result("docs", r.docs);
    m.result("masked_tokens", r.masked_tokens);
    m.result("ppl", r.ppl);
    m.write(mpath);
  }
  return 0;
}

// --- inspect ---------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out) {
  const auto h = read_checkpoint_header(path);
  out << "version=" << h.version << '\n' << dump_settings(h.settings) << "[tensors]\n";
  for (const auto& t : h.tensors) out << t.name << ' ' << t.dtype << ' ' << t.rows << 'x' << t.cols << '\n';
  return 0;
}

void add_train_options(CLI::App* sub, TrainArgs& a, bool stage) {
  sub->add_option("--config", a.config, "settings file")->check(CLI::ExistingFile);
  sub->add_option("--data", a.data, "training data (text lines, corpus manifest, or instruction TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--vocab", a.vocab, "vocabulary file (default: the one named by the init checkpoint)");
  sub->add_option("--init", a.init, "checkpoint to start from")->check(CLI::ExistingFile);
  sub->add_option("--resume", a.resume, "checkpoint to resume, including optimizer state")->check(CLI::ExistingFile);
  sub->add_option("--out", a.out, "output checkpoint")->required();
  sub->add_option("--metrics", a.metrics, "metrics CSV (default: <out>.metrics.csv)");
  sub->add_option("--manifest", a.manifest, "run manifest (default: <out>.manifest)");
  if (stage) sub->add_option("--stage", a.stage, "SFT stage number");
  sub->add_option("--lr", a.lr, "peak learning rate");
  sub->add_option("--epochs", a.epochs);
  sub->add_option("--steps", a.steps, "total optimizer steps (overrides epochs)");
  sub->add_option("--micro-batch", a.micro_batch);
  sub->add_option("--grad-accum", a.grad_accum);
  sub->add_option("--warmup-steps", a.warmup_steps);
  sub->add_option("--checkpoint-every", a.checkpoint_every);
  sub->add_option("--seed", a.seed);
  if (stage) sub->add_option("--response-len", a.response_len, "pad responses with EOS to this many tokens");
  sub->add_option("--rank", a.rank, "LoRA rank");
  sub->add_option("--set", a.sets, "override any setting as section.key=value");
  sub->get_option("--init")->excludes("--resume");
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked diffusion language model toolkit", "mdlm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* vocab = app.add_subcommand("vocab", "vocabulary tools")->require_subcommand(1);
  VocabArgs va;
  auto* vocab_build = vocab->add_subcommand("build", "build a vocabulary from text files");
  vocab_build->add_option("--mode", va.mode, "char or word")->check(CLI::IsMember({"char", "word"}));
  vocab_build->add_option("--max-size", va.max_size, "vocabulary size cap including specials");
  vocab_build->add_option("--in", va.inputs, "input text files")->required()->check(CLI::ExistingFile);
  vocab_build->add_option("--out", va.out, "vocabulary file")->required();
  vocab_build->add_option("--manifest", va.manifest, "run manifest (default: <out>.manifest)");

  auto* corpus = app.add_subcommand("corpus", "corpus curation")->require_subcommand(1);
  CorpusArgs ca;
  auto* corpus_prep = corpus->add_subcommand("prep", "length-filter, merge, shuffle and sample");
  corpus_prep->add_option("--vocab", ca.vocab)->required()->check(CLI::ExistingFile);
  corpus_prep->add_option("--ency", ca.ency, "encyclopedic sources, kept whole")->check(CLI::ExistingFile);
  corpus_prep->add_option("--web", ca.web, "web/news sources, sampled")->check(CLI::ExistingFile);
  corpus_prep->add_option("--max-len", ca.max_len, "drop records longer than this many tokens");
  corpus_prep->add_option("--sample", ca.sample, "records to sample from the web/news pool");
  corpus_prep->add_option("--seed", ca.seed);
  corpus_prep->add_option("--out", ca.out, "output corpus manifest (source<TAB>text)")->required();
  corpus_prep->add_option("--report", ca.report, "curation report (default: <out>.report)");
  corpus_prep->add_option("--manifest", ca.manifest, "run manifest (default: <out>.manifest)");

  auto* train_cmd = app.add_subcommand("train", "training phases")->require_subcommand(1);
  TrainArgs ta;
  auto* train_base = train_cmd->add_subcommand("base", "full-parameter masked-diffusion pretraining");
  auto* train_cpt = train_cmd->add_subcommand("cpt", "LoRA continual pretraining");
  auto* train_sft = train_cmd->add_subcommand("sft", "full-parameter instruction tuning");
  add_train_options(train_base, ta, false);
  add_train_options(train_cpt, ta, false);
  add_train_options(train_sft, ta, true);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "blockwise masked-diffusion sampling");
  gen->add_option("--ckpt", ga.ckpt)->required()->check(CLI::ExistingFile);
  gen->add_option("--prompt", ga.prompt)->required();
  gen->add_option("--vocab", ga.vocab);
  gen->add_option("--preset", ga.preset, "long (128/128) or short (64/64)");
  gen->add_option("--config", ga.config)->check(CLI::ExistingFile);
  gen->add_option("--format", ga.format, "auto, sft or plain prompt layout");
  gen->add_option("--steps", ga.steps);
  gen->add_option("--max-new-tokens", ga.max_new_tokens);
  gen->add_option("--block-len", ga.block_len);
  gen->add_option("--temp", ga.temp);
  gen->add_option("--rep-pen", ga.rep_pen);
  gen->add_option("--remask", ga.remask)->check(CLI::IsMember({"low_conf", "random"}));
  gen->add_option("--stochastic", ga.stochastic);
  gen->add_option("--cfg", ga.cfg);
  gen->add_option("--seed", ga.seed);
  gen->add_option("--set", ga.sets, "override a generate setting as generate.key=value");
  gen->add_option("--trace", ga.trace, "write per-step states, masks shown as _");
  gen->add_option("--out", ga.out, "write the generated text");
  gen->add_option("--manifest", ga.manifest, "run manifest (default: <out>.manifest when --out is given)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluation")->require_subcommand(1);
  EvalArgs ea;
  auto* ppl = eval_cmd->add_subcommand("ppl", "masked-LM pseudo-perplexity");
  ppl->add_option("--ckpt", ea.ckpt)->required()->check(CLI::ExistingFile);
  ppl->add_option("--corpus", ea.corpus)->required()->check(CLI::ExistingFile);
  ppl->add_option("--vocab", ea.vocab);
  ppl->add_option("--config", ea.config)->check(CLI::ExistingFile);
  ppl->add_option("--mask-prob", ea.mask_prob);
  ppl->add_option("--max-len", ea.max_len);
  ppl->add_option("--seed", ea.seed);
  ppl->add_option("--rounds", ea.rounds);
  ppl->add_option("--out", ea.out, "write the summary line");
  ppl->add_option("--manifest", ea.manifest, "run manifest (default: <out>.manifest when --out is given)");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "print a checkpoint header without loading tensors");
  inspect->add_option("--ckpt", inspect_path)->required()->check(CLI::ExistingFile);

  std::vector<const char*> cargv;
  for (const auto& s : argv) cargv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*vocab_build) return cmd_vocab_build(va, out);
    if (*corpus_prep) return cmd_corpus_prep(ca, out);
    if (*train_base) return cmd_train(TrainPhase::Base, ta, out, err);
    if (*train_cpt) return cmd_train(TrainPhase::Cpt, ta, out, err);
    if (*train_sft) return cmd_train(TrainPhase::Sft, ta, out, err);
    if (*gen) return cmd_generate(ga, out);
    if (*ppl) return cmd_eval(ea, out);
    if (*inspect) return cmd_inspect(inspect_path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace mdlm::cli
