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

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <xdrec/autodiff.h>
#include <xdrec/corpus.h>

namespace xdrec {

/// Undirected graph with binary edge weights and its symmetric-normalized
/// adjacency D^-1/2 (A + I) D^-1/2.
class InteractionGraph {
 public:
  using Edge = std::pair<Index, Index>;

  InteractionGraph() = default;
  /// Edges are canonicalized (a < b), deduplicated and sorted. Self-edges and
  /// out-of-range endpoints throw ShapeError.
  InteractionGraph(std::string descriptor, Index numNodes,
                   std::vector<Edge> edges);

  /// "items:S", "items:T" or "users+items".
  const std::string& descriptor() const {
    return descriptor_;
  }
  Index numNodes() const {
    return numNodes_;
  }
  const std::vector<Edge>& edges() const {
    return edges_;
  }
  SparseMatrix adjacency() const;
  const SparseMatrix& normalized() const {
    return normalized_;
  }

  /// Header line `# <descriptor> <numNodes>` then one `a<TAB>b` per edge.
  void save(const std::filesystem::path& path) const;
  static InteractionGraph load(const std::filesystem::path& path);

  bool operator==(const InteractionGraph& other) const {
    return descriptor_ == other.descriptor_ && numNodes_ == other.numNodes_ &&
           edges_ == other.edges_;
  }

 private:
  std::string descriptor_;
  Index numNodes_ = 0;
  std::vector<Edge> edges_;
  SparseMatrix normalized_;
};

/// Items of one domain a user has interacted with in training-visible
/// history: all source items, or target items minus the valid/test pair.
std::span<const ItemIndex> trainingVisible(const UserSequenceBundle& bundle,
                                           Domain domain);

/// Co-interaction graph over one domain's items (local indices). Each user
/// contributes a clique over the last `window` items of the training-visible
/// sequence.
InteractionGraph buildItemGraph(std::span<const UserSequenceBundle> bundles,
                                const IndexMaps& maps, Domain domain,
                                std::size_t window = 100);

/// Users occupy nodes [0, |U|); unified item m is node |U| + m. Every
/// training-visible interaction in either domain contributes one edge.
InteractionGraph buildBipartiteGraph(std::span<const UserSequenceBundle> bundles,
                                     const IndexMaps& maps);

/// Edges only between consecutive items of each user's training-visible
/// sequence in one domain.
InteractionGraph buildChainGraph(std::span<const UserSequenceBundle> bundles,
                                 const IndexMaps& maps, Domain domain);

struct GCNLayer {
  Parameter weight;  // d x d
  Parameter bias;    // 1 x d
  double slope = 0.01;

  static GCNLayer init(const std::string& name, Index dim, double scale,
                       double slope, std::mt19937_64& rng);
};

/// LeakyReLU(Â H W + b).
ad::Var gcnPropagate(const InteractionGraph& graph, ad::Var features,
                     GCNLayer& layer);
Matrix gcnPropagate(const InteractionGraph& graph, const Matrix& features,
                    GCNLayer& layer);

} // namespace xdrec
