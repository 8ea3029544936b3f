// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "mdlm/common.hpp"
#include "mdlm/lora.hpp"
#include "mdlm/model.hpp"

namespace mdlm {

/// Attaches a fresh LoRA adapter. The base tensors become frozen; since B
/// starts at zero the eval-mode output is unchanged.
template <typename T>
void attach_lora(Encoder<T>& model, const LoraConfig& cfg, std::uint64_t seed) {
  if (model.has_adapter()) throw Error("an adapter is already attached");
  model.set_adapter(make_lora_adapter(model.parameters(), cfg, seed));
}

/// Folds the adapter into the base weights and detaches it.
template <typename T>
void merge_lora(Encoder<T>& model) {
  if (!model.has_adapter()) throw Error("no adapter attached");
  merge_lora_into(model.parameters(), *model.adapter());
  model.set_adapter(std::nullopt);
}

/// Adapter elements over all elements (frozen base included).
template <typename T>
double trainable_fraction(const Encoder<T>& model) {
  if (!model.has_adapter()) throw Error("no adapter attached");
  const auto adapter = static_cast<double>(model.adapter()->tensors.element_count());
  const auto base = static_cast<double>(model.parameters().element_count());
  return adapter / (adapter + base);
}

}  // namespace mdlm
