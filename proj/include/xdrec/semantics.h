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

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <xdrec/corpus.h>
#include <xdrec/llm_client.h>
#include <xdrec/taxonomy.h>

namespace xdrec {

enum class Provenance { Llm, Fallback };

std::string_view provenanceName(Provenance p);

/// LLM output for one item: labels per taxonomy category plus a summary.
struct ItemSemanticProfile {
  ItemIndex item = 0;  // unified
  std::string itemId;
  /// Aligned with Taxonomy::categories(); canonical label spellings.
  std::vector<std::vector<std::string>> assignments;
  std::string summary;
  Provenance provenance = Provenance::Llm;

  bool operator==(const ItemSemanticProfile&) const = default;
};

/// Prompt template with {source_domain}, {target_domain}, {category_path},
/// {brand}, {title_description}, {schema} and {output_format} slots.
extern const std::string_view kPromptTemplate;

/// Fills the template. Deterministic; empty fields leave empty brackets.
std::string renderPrompt(const ItemMetadata& item, const Taxonomy& taxonomy,
                         const DomainNames& domains = {});

struct ValidationError {
  enum class Kind {
    ParseFailure,
    MissingCategory,
    EmptyLabels,
    OutOfVocabulary,
    MissingSummary,
  };
  Kind kind;
  std::string category;
  std::string label;
  std::string message;
};

struct ValidationResult {
  std::optional<ItemSemanticProfile> profile;
  std::vector<ValidationError> errors;

  bool ok() const {
    return profile.has_value();
  }
};

/// Accepts a JSON object (optionally wrapped in prose or code fences) with a
/// features block ("features" or "Features") mapping every category to a
/// nonempty list of in-vocabulary labels, and a nonempty summary
/// ("semantic_summary" or "SemanticSummary"). Extra fields, including
/// "mapped_id", are ignored. The item identity fields are left default.
ValidationResult validateProfile(std::string_view raw, const Taxonomy& taxonomy);

/// Renders a profile in the response format validateProfile accepts.
std::string serializeResponse(const ItemSemanticProfile& profile,
                              const Taxonomy& taxonomy);

/// "Unknown" in every category; the summary falls back to the item title and
/// description.
ItemSemanticProfile fallbackProfile(ItemIndex item, const std::string& itemId,
                                    const ItemMetadata& metadata,
                                    const Taxonomy& taxonomy);

/// Content-addressed on-disk store of raw responses. Entries live at
/// `<root>/<k[0:2]>/<k[2:4]>/<k>.json`. Writes go through a temporary file and
/// a rename, so concurrent writers of the same key are safe.
class SemanticCache {
 public:
  struct Entry {
    std::string itemId;
    std::string taxonomyHash;
    std::string templateHash;
    std::string raw;
  };

  explicit SemanticCache(std::filesystem::path root);

  static std::string key(const std::string& itemId,
                         const std::string& taxonomyHash,
                         const std::string& templateHash);

  /// Missing or unreadable entries yield nullopt.
  std::optional<Entry> get(const std::string& key) const;
  void put(const std::string& key, const Entry& entry);
  std::filesystem::path pathFor(const std::string& key) const;

 private:
  std::filesystem::path root_;
};

struct ExtractionConfig {
  /// Total attempts per item, including the first.
  int maxRetries = 3;
  GenerationParams generation;
  double requestsPerSecond = 0.0;
  /// Sleep before retrying after a transport failure; doubles per attempt.
  std::chrono::milliseconds backoff{0};
  double maxFallbackRate = 0.20;
  std::size_t workers = 1;
  DomainNames domains;
};

struct ExtractionStats {
  std::size_t items = 0;
  std::size_t calls = 0;
  std::size_t cacheHits = 0;
  std::size_t fallbacks = 0;
  std::size_t invalidResponses = 0;
  std::size_t transportFailures = 0;

  double fallbackRate() const {
    return items == 0 ? 0.0
                      : static_cast<double>(fallbacks) /
                          static_cast<double>(items);
  }
};

/// Cache-first profile extraction with validation, retries and fallback.
class SemanticExtractor {
 public:
  SemanticExtractor(LlmClient& client, const Taxonomy& taxonomy,
                    SemanticCache* cache, ExtractionConfig config = {});

  ItemSemanticProfile extract(ItemIndex item, const std::string& itemId,
                              const ItemMetadata& metadata);

  /// One profile per unified item, in index order. Throws
  /// ExtractionQualityError when the fallback rate exceeds the configured
  /// maximum.
  std::vector<ItemSemanticProfile> extractAll(const Corpus& corpus);

  ExtractionStats stats() const;

 private:
  LlmClient& client_;
  const Taxonomy& taxonomy_;
  SemanticCache* cache_;
  ExtractionConfig config_;
  std::string taxonomyHash_;
  std::string templateHash_;
  TokenBucket bucket_;
  mutable std::mutex mu_;
  ExtractionStats stats_;
};

/// Replaces labels used by fewer than `minLabelFrequency` items (per
/// category, corpus-wide) with "Unknown". Idempotent.
std::vector<ItemSemanticProfile> filterOutliers(
  std::vector<ItemSemanticProfile> profiles, const Taxonomy& taxonomy,
  int minLabelFrequency = 2);

/// One JSON object per line: item_id, features, semantic_summary, provenance.
void writeProfiles(const std::filesystem::path& path,
                   const std::vector<ItemSemanticProfile>& profiles,
                   const Taxonomy& taxonomy);
/// Reads an export back, resolving item ids through `maps`. Every unified
/// item must be present exactly once.
std::vector<ItemSemanticProfile> readProfiles(const std::filesystem::path& path,
                                              const Taxonomy& taxonomy,
                                              const IndexMaps& maps);

} // namespace xdrec
