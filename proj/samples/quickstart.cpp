// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

// Library walk-through: build a vocabulary, pretrain a small encoder, adapt
// it with LoRA, instruction-tune it and sample with blockwise low-confidence
// remasking.
//
//   quickstart [data_dir]

#include <iostream>
#include <string>
#include <vector>

#include "mdlm/mdlm.hpp"

using namespace mdlm;

int main(int argc, char** argv) {
  const std::string data = argc > 1 ? argv[1] : "data";

  // Character vocabulary over the Turkish corpora and the instruction set.
  std::vector<std::string> texts = read_lines(data + "/tr_news.txt");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& line : read_lines(data + "/instr_stage1.tsv")) {
    const auto tab = line.find('\t');
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    texts.push_back(pairs.back().first);
    texts.push_back(pairs.back().second);
  }
  const auto vocab = Vocabulary::build(texts, TokenizerMode::Char, 512);
  const auto& sp = vocab.specials();

  ModelConfig mc;
  mc.n_layers = 2;
  mc.d_model = 32;
  mc.n_heads = 4;
  mc.d_ffn = 64;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.max_positions = 128;
  mc.pad_id = sp.pad;
  auto model = Encoder<float>::initialize(mc);

  // Pretraining on plain text.
  std::vector<TokenSequence> corpus;
  for (const auto& t : read_lines(data + "/tr_news.txt")) corpus.push_back(vocab.encode(t));
  TrainConfig pre;
  pre.phase = TrainPhase::Base;
  pre.total_steps = 200;
  pre.micro_batch = 8;
  pre.peak_lr = 3e-3;
  auto state = OptimizerState<float>::for_gradients(model.zero_gradients());
  auto r = train(model, std::span<const TokenSequence>(corpus), pre, state, sp);
  std::cout << "pretraining loss " << r.epoch_loss.front() << " -> " << r.epoch_loss.back() << '\n';
  std::cout << "pseudo-perplexity " << pseudo_perplexity(model, std::span<const TokenSequence>(corpus), EvalConfig{}, sp).ppl
            << '\n';

  // Continual pretraining through a LoRA adapter, then merge it.
  attach_lora(model, LoraConfig{}, 0);
  std::cout << "trainable fraction " << trainable_fraction(model) << '\n';
  TrainConfig cpt = pre;
  cpt.phase = TrainPhase::Cpt;
  cpt.total_steps = 20;
  cpt.peak_lr = 5e-4;
  state = OptimizerState<float>::for_gradients(model.zero_gradients());
  train(model, std::span<const TokenSequence>(corpus), cpt, state, sp);
  merge_lora(model);

  // Instruction tuning: only response positions are masked.
  std::vector<TokenSequence> sft;
  for (const auto& [instr, resp] : pairs) sft.push_back(format_sft_pair(vocab, instr, resp, 128, 64));
  TrainConfig tune;
  tune.phase = TrainPhase::Sft;
  tune.total_steps = 300;
  tune.micro_batch = 4;
  tune.peak_lr = 3e-3;
  state = OptimizerState<float>::for_gradients(model.zero_gradients());
  train(model, std::span<const TokenSequence>(sft), tune, state, sp);

  // 64 new tokens in two blocks of 32.
  const auto prompt = format_sft_prompt(vocab, pairs.front().first);
  const auto out = generate(model, prompt, GeneratorConfig::short_context(), sp);
  std::cout << "prompt: " << pairs.front().first << '\n'
            << "output: " << vocab.decode_text(out.generated()) << '\n'
            << "forward passes: " << out.forward_passes << '\n';
  return 0;
}
