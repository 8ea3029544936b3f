// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdlm/adapter.hpp"
#include "mdlm/checkpoint.hpp"
#include "mdlm/common.hpp"
#include "mdlm/config.hpp"
#include "mdlm/corpus.hpp"
#include "mdlm/diffusion.hpp"
#include "mdlm/eval.hpp"
#include "mdlm/generator.hpp"
#include "mdlm/lora.hpp"
#include "mdlm/model.hpp"
#include "mdlm/parallel.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/tensor.hpp"
#include "mdlm/trainer.hpp"
#include "mdlm/vocab.hpp"
