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

#include <xdrec/graph.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <xdrec/errors.h>
#include <xdrec/representation.h>

namespace xdrec {

InteractionGraph::InteractionGraph(std::string descriptor, Index numNodes,
                                   std::vector<Edge> edges)
  : descriptor_(std::move(descriptor)), numNodes_(numNodes) {
  if (numNodes < 0) {
    throw ShapeError("graph node count must be nonnegative");
  }
  for (auto& [a, b] : edges) {
    if (a == b) {
      throw ShapeError("self-edges are not allowed");
    }
    if (a < 0 || b < 0 || a >= numNodes || b >= numNodes) {
      throw ShapeError("edge endpoint out of range");
    }
    if (a > b) {
      std::swap(a, b);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  std::vector<double> degree(static_cast<std::size_t>(numNodes_), 1.0);
  for (const auto& [a, b] : edges_) {
    degree[static_cast<std::size_t>(a)] += 1.0;
    degree[static_cast<std::size_t>(b)] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * edges_.size() + static_cast<std::size_t>(numNodes_));
  for (Index i = 0; i < numNodes_; ++i) {
    t.emplace_back(i, i, 1.0 / degree[static_cast<std::size_t>(i)]);
  }
  for (const auto& [a, b] : edges_) {
    const double w = 1.0 / std::sqrt(degree[static_cast<std::size_t>(a)] *
                                     degree[static_cast<std::size_t>(b)]);
    t.emplace_back(a, b, w);
    t.emplace_back(b, a, w);
  }
  normalized_.resize(numNodes_, numNodes_);
  normalized_.setFromTriplets(t.begin(), t.end());
  normalized_.makeCompressed();
}

SparseMatrix InteractionGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * edges_.size());
  for (const auto& [a, b] : edges_) {
    t.emplace_back(a, b, 1.0);
    t.emplace_back(b, a, 1.0);
  }
  SparseMatrix A(numNodes_, numNodes_);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

void InteractionGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write graph to " + path.string());
  }
  out << "# " << descriptor_ << ' ' << numNodes_ << '\n';
  for (const auto& [a, b] : edges_) {
    out << a << '\t' << b << '\n';
  }
  if (!out) {
    throw IoError("failed writing graph to " + path.string());
  }
}

InteractionGraph InteractionGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read graph from " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw FormatError(path.string() + ": missing graph header");
  }
  std::istringstream header(line.substr(2));
  std::string descriptor;
  Index n = -1;
  if (!(header >> descriptor >> n) || n < 0) {
    throw FormatError(path.string() + ": malformed graph header");
  }
  std::vector<Edge> edges;
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    Index a = 0;
    Index b = 0;
    if (!(row >> a >> b)) {
      throw FormatError(path.string() + ":" + std::to_string(lineNo) +
                        ": malformed edge");
    }
    edges.emplace_back(a, b);
  }
  return InteractionGraph(descriptor, n, std::move(edges));
}

std::span<const ItemIndex> trainingVisible(const UserSequenceBundle& bundle,
                                           Domain domain) {
  if (domain == Domain::Source) {
    return bundle.source;
  }
  return std::span<const ItemIndex>(bundle.target).first(
    bundle.numTrainTarget());
}

namespace {

const char* itemDescriptor(Domain domain) {
  return domain == Domain::Source ? "items:S" : "items:T";
}

ItemIndex localOf(const IndexMaps& maps, ItemIndex unified) {
  return maps.split(unified).second;
}

} // namespace

InteractionGraph buildItemGraph(std::span<const UserSequenceBundle> bundles,
                                const IndexMaps& maps, Domain domain,
                                std::size_t window) {
  std::vector<InteractionGraph::Edge> edges;
  for (const auto& b : bundles) {
    auto seq = trainingVisible(b, domain);
    if (seq.size() > window) {
      seq = seq.last(window);
    }
    std::vector<ItemIndex> items;
    items.reserve(seq.size());
    for (ItemIndex m : seq) {
      items.push_back(localOf(maps, m));
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        edges.emplace_back(items[i], items[j]);
      }
    }
  }
  return InteractionGraph(itemDescriptor(domain),
                          static_cast<Index>(maps.numItems(domain)),
                          std::move(edges));
}

InteractionGraph buildBipartiteGraph(std::span<const UserSequenceBundle> bundles,
                                     const IndexMaps& maps) {
  const auto U = static_cast<Index>(maps.numUsers());
  std::vector<InteractionGraph::Edge> edges;
  for (const auto& b : bundles) {
    for (Domain d : {Domain::Source, Domain::Target}) {
      for (ItemIndex m : trainingVisible(b, d)) {
        edges.emplace_back(b.user, U + m);
      }
    }
  }
  return InteractionGraph("users+items",
                          U + static_cast<Index>(maps.numUnifiedItems()),
                          std::move(edges));
}

InteractionGraph buildChainGraph(std::span<const UserSequenceBundle> bundles,
                                 const IndexMaps& maps, Domain domain) {
  std::vector<InteractionGraph::Edge> edges;
  for (const auto& b : bundles) {
    const auto seq = trainingVisible(b, domain);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const ItemIndex a = localOf(maps, seq[i - 1]);
      const ItemIndex c = localOf(maps, seq[i]);
      if (a != c) {
        edges.emplace_back(a, c);
      }
    }
  }
  return InteractionGraph(itemDescriptor(domain),
                          static_cast<Index>(maps.numItems(domain)),
                          std::move(edges));
}

GCNLayer GCNLayer::init(const std::string& name, Index dim, double scale,
                        double slope, std::mt19937_64& rng) {
  GCNLayer layer;
  layer.slope = slope;
  layer.weight.name = name + "_w";
  layer.bias.name = name + "_b";
  initUniform(layer.weight, dim, dim, scale, rng);
  initUniform(layer.bias, 1, dim, scale, rng);
  layer.bias.value.setZero();
  return layer;
}

ad::Var gcnPropagate(const InteractionGraph& graph, ad::Var features,
                     GCNLayer& layer) {
  if (features.rows() != graph.numNodes()) {
    throw ShapeError("feature rows (" + std::to_string(features.rows()) +
                     ") do not match graph nodes (" +
                     std::to_string(graph.numNodes()) + ")");
  }
  ad::Tape& tape = *features.tape();
  ad::Var agg = ad::spmm(graph.normalized(), features);
  ad::Var lin = ad::addRow(ad::matmul(agg, tape.param(layer.weight)),
                           tape.param(layer.bias));
  return ad::leakyRelu(lin, layer.slope);
}

Matrix gcnPropagate(const InteractionGraph& graph, const Matrix& features,
                    GCNLayer& layer) {
  ad::Tape tape;
  return gcnPropagate(graph, tape.constant(features), layer).value();
}

} // namespace xdrec
