/*
 * Copyright 2026 The xdrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <xdrec/autodiff.h>

namespace xdrec {

struct TransformerBlock {
  Parameter wq, wk, wv, wo;  // d x d
  Parameter ff1W, ff1B;      // d x d, 1 x d
  Parameter ff2W, ff2B;
  Parameter ln1Gamma, ln1Beta;
  Parameter ln2Gamma, ln2Beta;
};

/// Causal single-head Transformer with two post-LN blocks and learned
/// positional embeddings.
struct TransformerEncoder {
  static constexpr std::size_t kBlocks = 2;

  Parameter position;  // maxLen x d
  std::array<TransformerBlock, kBlocks> blocks;
  double dropout = 0.5;
  double layerNormEps = 1e-8;

  static TransformerEncoder init(const std::string& name, Index dim,
                                 std::size_t maxLen, double dropout,
                                 double scale, std::mt19937_64& rng);

  std::size_t maxLen() const {
    return static_cast<std::size_t>(position.value.rows());
  }
  std::vector<Parameter*> parameters();
};

struct EncodedSequence {
  ad::Var states;  // n x d, one row per (truncated) position
  ad::Var last;    // 1 x d
};

/// Gathers `items` rows of `table`, keeping only the last maxLen, and runs the
/// encoder. Dropout is applied only when `rng` is non-null. Throws ShapeError
/// on an empty sequence.
EncodedSequence encodeSequence(ad::Var table, std::span<const Index> items,
                               TransformerEncoder& encoder,
                               std::mt19937_64* rng = nullptr);

/// Same, starting from an already gathered n x d input.
EncodedSequence encodeInputs(ad::Var inputs, TransformerEncoder& encoder,
                             std::mt19937_64* rng = nullptr);

/// Target positions attend over all source positions; output is the target
/// state plus the output-projected readout.
struct CrossAttentionFuser {
  Parameter wq, wk, wv, wo;
  double dropout = 0.5;

  static CrossAttentionFuser init(const std::string& name, Index dim,
                                  double dropout, double scale,
                                  std::mt19937_64& rng);
  std::vector<Parameter*> parameters();
};

struct CrossAttentionResult {
  ad::Var fused;    // nT x d
  ad::Var weights;  // nT x nS, rows sum to one
  ad::Var last;     // 1 x d
};

CrossAttentionResult crossAttentionFuse(ad::Var targetStates,
                                        ad::Var sourceStates,
                                        CrossAttentionFuser& fuser,
                                        std::mt19937_64* rng = nullptr);

} // namespace xdrec
