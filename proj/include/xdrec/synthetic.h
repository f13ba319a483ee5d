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

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <xdrec/corpus.h>
#include <xdrec/taxonomy.h>

namespace xdrec {

/// Two-domain corpus whose users prefer one of a few latent categories shared
/// by both domains. Item labels and summaries are derived from the latent
/// category, so the semantic views carry the planted signal.
struct SyntheticConfig {
  std::size_t users = 50;
  std::size_t itemsPerDomain = 30;
  std::size_t latentCategories = 4;
  std::size_t minSourceLength = 10;
  std::size_t maxSourceLength = 16;
  std::size_t minTargetLength = 10;
  std::size_t maxTargetLength = 16;
  /// Probability that a draw comes from the user's preferred category.
  double preference = 0.85;
  std::uint64_t seed = 7;
  DomainNames domains{"Books", "Movies"};
};

struct SyntheticCorpus {
  SyntheticConfig config;
  std::vector<InteractionRecord> source;
  std::vector<InteractionRecord> target;
  ItemMetadataStore metadata;
  std::map<std::string, std::size_t> itemLatent;
  std::map<std::string, std::size_t> userLatent;
};

SyntheticCorpus generateSynthetic(const SyntheticConfig& config);

/// source.tsv, target.tsv (user, item, rating, timestamp) and metadata.jsonl.
void writeSyntheticFiles(const SyntheticCorpus& corpus,
                         const std::filesystem::path& dir);

/// Valid response text for an item of the given latent category.
std::string plantedResponse(std::size_t latent, const Taxonomy& taxonomy,
                            Domain domain, std::mt19937_64& rng);

/// One mock-LLM entry per item, keyed by the rendered prompt. A
/// `malformedFraction` of the items (rounded to a whole count) first answer
/// with an invalid response and then with a valid one. Returns the number of
/// malformed-first entries.
std::size_t writeMockResponses(const SyntheticCorpus& corpus,
                               const Taxonomy& taxonomy,
                               const std::filesystem::path& dir,
                               double malformedFraction = 0.0,
                               std::uint64_t seed = 11);

} // namespace xdrec
