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
#include <cstddef>
#include <random>
#include <vector>

#include <xdrec/autodiff.h>
#include <xdrec/corpus.h>
#include <xdrec/semantics.h>
#include <xdrec/taxonomy.h>
#include <xdrec/text_encoder.h>

namespace xdrec {

struct HyperParams {
  std::size_t idDim = 64;
  std::size_t innerDim = 64;
  std::size_t agnosticDim = 64;
  std::size_t contrastiveDim = 64;
  std::size_t modelDim = 64;
  std::size_t textDim = 384;
  double temperature = 0.07;
  double dropout = 0.5;
  std::size_t maxSeqLen = 100;
  double leakySlope = 0.01;
  /// Parameters are drawn from uniform(-initScale, initScale).
  double initScale = 0.01;
  /// Above this many items per domain, contrastive negatives come from the
  /// batch instead of the whole catalog.
  std::size_t contrastiveCatalogLimit = 4096;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// Which item views feed the composed embedding.
struct ViewSet {
  bool inner = true;
  bool agnostic = true;
};

/// Item/user embedding tables plus the projections that build and align the
/// item views.
struct EmbeddingTables {
  Parameter itemId;       // |I| x d1
  Parameter user;         // |U| x d
  Parameter subcategory;  // (sum_k m_k) x d_a
  Parameter innerW;       // d_text x d2
  Parameter innerB;       // 1 x d2
  Parameter composeW;     // (d1 [+ d2] [+ d_a]) x d
  Parameter composeB;     // 1 x d
  Parameter headId;       // d1 x d_c
  Parameter headInner;    // d2 x d_c
  Parameter headAgnostic; // d_a x d_c
  ViewSet views;

  static EmbeddingTables init(const HyperParams& hp, std::size_t numItems,
                              std::size_t numUsers, std::size_t numSubcategories,
                              ViewSet views, std::mt19937_64& rng);

  std::vector<Parameter*> parameters();
};

/// Fills a parameter with uniform(-scale, scale) draws.
void initUniform(Parameter& p, Index rows, Index cols, double scale,
                 std::mt19937_64& rng);

/// Fixed per-item inputs derived from the semantic profiles.
struct ItemSemanticInputs {
  Matrix summaries;               // |I| x d_text
  SparseMatrix agnosticPooling;   // |I| x (sum_k m_k)
};

/// Row m holds weight 1 / (K * |V_m(c_k)|) on every assigned subcategory, so
/// that P * E_sub is the nested mean (within category, then across).
SparseMatrix agnosticPoolingMatrix(
  const std::vector<ItemSemanticProfile>& profiles, const Taxonomy& taxonomy);

ItemSemanticInputs buildSemanticInputs(
  const std::vector<ItemSemanticProfile>& profiles, const Taxonomy& taxonomy,
  TextEncoder& encoder);

/// Nested mean of subcategory embeddings for one profile.
RowVector agnosticEmbedding(const ItemSemanticProfile& profile,
                            const Taxonomy& taxonomy,
                            const Matrix& subcategoryTable);

/// summary * W + b. Throws ConfigError on a dimension mismatch.
RowVector innerSemanticEmbedding(const RowVector& summary, const Matrix& weight,
                                 const RowVector& bias);

/// [eId | eInner | eAgnostic] * W + b. Empty views are skipped.
RowVector composeItemEmbedding(const RowVector& eId, const RowVector& eInner,
                               const RowVector& eAgnostic, const Matrix& weight,
                               const RowVector& bias);

/// Rank of the ID block of the composition projection; the map e_ID -> e_m
/// is injective when this equals d1.
Index idSlotRank(const EmbeddingTables& tables);

/// The three item views for the whole catalog, recorded on a tape.
struct ItemViews {
  ad::Var id;
  ad::Var inner;     // invalid when the view is disabled
  ad::Var agnostic;  // invalid when the view is disabled
};

ItemViews itemViews(ad::Tape& tape, EmbeddingTables& tables,
                    const ItemSemanticInputs& inputs);

/// Composed item embeddings e_m for the whole catalog (|I| x d).
ad::Var composeItems(ad::Tape& tape, EmbeddingTables& tables,
                     const ItemViews& views);

/// sum_i -log softmax_j(cos(q_i, k_j) / tau)_i over rows. Zero-norm rows have
/// similarity 0 everywhere and are counted in `*zeroRows`.
ad::Var infonce(ad::Var queries, ad::Var keys, double temperature,
                std::size_t* zeroRows = nullptr);

struct InfoNceResult {
  double loss = 0.0;
  std::size_t zeroNormRows = 0;
};

InfoNceResult infonceLoss(const Matrix& queries, const Matrix& keys,
                          double temperature);

struct ContrastiveTerms {
  ad::Var idVsAgnostic;     // L_c1
  ad::Var innerVsAgnostic;  // L_c2, invalid when the inner view is off
  std::size_t zeroNormRows = 0;
};

/// Per-domain InfoNCE with projected agnostic embeddings as keys, summed over
/// source and target. `domainItems[d]` lists unified indices; empty domains
/// are skipped. Domains larger than `catalogLimit` are split into consecutive
/// blocks, each its own pool of negatives. Requires the agnostic view.
ContrastiveTerms contrastiveRegularizer(
  ad::Tape& tape, EmbeddingTables& tables, const ItemViews& views,
  const std::array<std::vector<ItemIndex>, 2>& domainItems, double temperature,
  std::size_t catalogLimit = 4096);

} // namespace xdrec
