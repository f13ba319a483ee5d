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
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <xdrec/autodiff.h>
#include <xdrec/corpus.h>
#include <xdrec/graph.h>
#include <xdrec/optimizer.h>
#include <xdrec/representation.h>
#include <xdrec/sequence.h>

namespace xdrec {

/// Model variants obtained by removing one component.
enum class Ablation {
  None,
  NoInnSem,         // drop the inner-domain semantic view
  NoDomAgnSem,      // drop the domain-agnostic view and both regularizers
  NoInnDomAgnSem,   // ID embeddings only
  SimpGraph,        // per-user chain graphs, no bipartite graph
  NoCDBehav,        // no cross-attention: z_fuse = z^T
  AvgFusion,        // fusion weights frozen at 1/3
  NoConReg,         // contrastive terms excluded from the loss
};

/// "full", "w/o InnSem", ... in the customary order.
const std::vector<Ablation>& allAblations();
std::string ablationName(Ablation a);
/// Accepts the display name or a compact key such as "no_inn_sem".
Ablation parseAblation(std::string_view name);
std::string ablationKey(Ablation a);

ViewSet viewsFor(Ablation a);
/// Whether the contrastive terms contribute to the loss.
bool regularizersActive(Ablation a);

struct FusionParams {
  Parameter alpha, beta, gamma;  // 1 x 1 each

  static FusionParams init();
  std::vector<Parameter*> parameters();
};

/// Collaborative structure and fixed semantic inputs shared by every forward
/// pass. Graphs depend on the ablation (chain graphs for SimpGraph).
struct ModelInputs {
  IndexMaps maps;
  InteractionGraph sourceGraph;
  InteractionGraph targetGraph;
  InteractionGraph mixedGraph;  // empty for SimpGraph
  ItemSemanticInputs semantics;
  std::array<std::vector<ItemIndex>, 2> domainItems;  // unified, per domain

  static ModelInputs build(const Corpus& corpus,
                           const std::vector<ItemSemanticProfile>& profiles,
                           const Taxonomy& taxonomy, TextEncoder& encoder,
                           Ablation ablation, std::size_t window = 100);
};

/// Every learnable plus optimizer state.
struct ModelState {
  HyperParams hyper;
  Ablation ablation = Ablation::None;
  /// Score candidates with graph-enriched target embeddings instead of e^ID.
  bool scoreEnriched = false;
  EmbeddingTables tables;
  GCNLayer gcnSource, gcnTarget, gcnMixed;
  TransformerEncoder encSource, encTarget, encMixed;
  CrossAttentionFuser cross;
  FusionParams fusion;
  std::uint64_t seed = 0;
  int epoch = 0;

  struct OptimizerState {
    std::int64_t steps = 0;
    std::vector<Matrix> m, v;
  };
  std::optional<OptimizerState> optimizer;

  static ModelState init(const HyperParams& hp, Ablation ablation,
                         const IndexMaps& maps, std::size_t numSubcategories,
                         std::uint64_t seed);

  /// Stable order; used by the optimizer and the checkpoint format.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

/// Graph-enriched embeddings for one forward pass.
struct Propagated {
  ItemViews views;
  ad::Var composed;   // |I| x d
  ad::Var enriched;   // |I| x d: h^S rows then h^T rows, unified order
  ad::Var itemMixed;  // |I| x d
  ad::Var userMixed;  // |U| x d
};

Propagated propagate(ad::Tape& tape, ModelState& state,
                     const ModelInputs& inputs);

/// Wraps precomputed values as constants (cached-propagation mode).
Propagated constantPropagation(ad::Tape& tape, const Propagated& source);

/// z_final for a set of prediction points of one user. Point k predicts
/// target[k] from target[0..k) and the mixed events before it; the source
/// sequence is used in full. All points share one encoding of the inputs up
/// to `horizon` (the largest k). Points whose states fall outside the last
/// maxLen window are dropped and not reported in `kept`.
struct UserStates {
  ad::Var z;  // |kept| x d
  std::vector<std::size_t> kept;
};

UserStates userStates(ad::Tape& tape, ModelState& state,
                      const Propagated& prop, const UserSequenceBundle& bundle,
                      std::size_t horizon, std::span<const std::size_t> points,
                      std::mt19937_64* rng = nullptr);

/// alpha * zFuse + beta * zMix + gamma * hUser (row-wise).
ad::Var adaptiveFuse(ad::Var zFuse, ad::Var zMix, ad::Var hUser,
                     FusionParams& fusion);
RowVector adaptiveFuse(const RowVector& zFuse, const RowVector& zMix,
                       const RowVector& hUser, double alpha, double beta,
                       double gamma);

/// Candidate representation table used for scoring.
ad::Var scoringTable(ad::Tape& tape, ModelState& state, const Propagated& prop);

/// dot(z, table[item]). Throws ShapeError on an out-of-range item.
double score(const RowVector& z, ItemIndex item, const Matrix& table);
std::vector<double> scoreCandidates(const RowVector& z,
                                    std::span<const ItemIndex> items,
                                    const Matrix& table);

/// mean softplus(neg - pos).
ad::Var bprLoss(ad::Var positive, ad::Var negative);
double bprLoss(std::span<const double> positive,
               std::span<const double> negative);

double totalLoss(double rec, double c1, double c2, double lambda);

/// Scores of `candidates` for `bundle` at prediction point `k` (dropout off).
std::vector<double> forwardUser(ModelState& state, const ModelInputs& inputs,
                                const UserSequenceBundle& bundle, std::size_t k,
                                std::span<const ItemIndex> candidates);

/// Precomputed tables for many dropout-free forward passes.
class Scorer {
 public:
  Scorer(ModelState& state, const ModelInputs& inputs);

  /// z_final at prediction point k; empty when k is outside the window.
  std::optional<RowVector> userVector(const UserSequenceBundle& bundle,
                                      std::size_t k);
  /// Rows of z_final for several prediction points sharing one horizon.
  UserStates userVectors(const UserSequenceBundle& bundle, std::size_t horizon,
                         std::span<const std::size_t> points, ad::Tape& tape);
  std::vector<double> scores(const RowVector& z,
                             std::span<const ItemIndex> candidates) const {
    return scoreCandidates(z, candidates, table_);
  }
  const Matrix& table() const {
    return table_;
  }

 private:
  ModelState& state_;
  Propagated cached_;
  ad::Tape base_;
  Matrix table_;
};

} // namespace xdrec
