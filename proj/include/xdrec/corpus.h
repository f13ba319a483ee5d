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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xdrec {

using ItemIndex = std::int64_t;
using UserIndex = std::int64_t;

enum class Domain : std::uint8_t { Source = 0, Target = 1 };

std::string_view domainTag(Domain domain);

/// One timestamped positive interaction.
struct InteractionRecord {
  std::string userId;
  std::string itemId;
  Domain domain = Domain::Source;
  std::int64_t timestamp = 0;
  /// Key into the metadata store, when the item has an entry there.
  std::optional<std::string> metadataRef;

  bool operator==(const InteractionRecord&) const = default;
};

struct ItemMetadata {
  std::string title;
  std::string categoryPath;
  std::string brand;
  std::string description;

  bool operator==(const ItemMetadata&) const = default;
};

using ItemMetadataStore = std::map<std::string, ItemMetadata>;

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::size_t malformed = 0;
  std::size_t lines = 0;
};

/// Parses `user<TAB>item<TAB>rating<TAB>timestamp` lines. Blank lines are
/// ignored. Throws FormatError when more than `maxMalformedFraction` of the
/// non-blank lines are malformed, IoError when the file cannot be read.
ParseResult parseInteractions(const std::filesystem::path& path, Domain domain,
                              double maxMalformedFraction = 0.10);
ParseResult parseInteractions(std::istream& in, Domain domain,
                              double maxMalformedFraction = 0.10);

/// One JSON object per line with item_id, title, category_path, brand and
/// description. Missing fields become empty strings.
ItemMetadataStore parseMetadata(const std::filesystem::path& path);
ItemMetadataStore parseMetadata(std::istream& in);

/// Dense indices for users and items. Source items occupy unified indices
/// [0, |I^S|), target items [|I^S|, |I^S| + |I^T|).
class IndexMaps {
 public:
  IndexMaps() = default;
  /// Ids are indexed in the given order.
  IndexMaps(std::vector<std::string> users, std::vector<std::string> sourceItems,
            std::vector<std::string> targetItems);

  std::size_t numUsers() const {
    return users_.size();
  }
  std::size_t numItems(Domain domain) const {
    return items_[static_cast<int>(domain)].size();
  }
  std::size_t numUnifiedItems() const {
    return items_[0].size() + items_[1].size();
  }

  std::optional<UserIndex> userIndex(const std::string& userId) const;
  std::optional<ItemIndex> localIndex(Domain domain,
                                      const std::string& itemId) const;

  const std::string& userId(UserIndex user) const;
  const std::string& itemId(Domain domain, ItemIndex local) const;
  const std::string& itemId(ItemIndex unified) const;

  ItemIndex unified(Domain domain, ItemIndex local) const;
  std::pair<Domain, ItemIndex> split(ItemIndex unified) const;
  Domain domainOf(ItemIndex unified) const {
    return split(unified).first;
  }
  /// First unified index of the target domain.
  ItemIndex targetOffset() const {
    return static_cast<ItemIndex>(items_[0].size());
  }

  const std::vector<std::string>& users() const {
    return users_;
  }
  const std::vector<std::string>& items(Domain domain) const {
    return items_[static_cast<int>(domain)];
  }

  bool operator==(const IndexMaps& other) const {
    return users_ == other.users_ && items_ == other.items_;
  }

 private:
  std::vector<std::string> users_;
  std::unordered_map<std::string, UserIndex> userIndex_;
  std::array<std::vector<std::string>, 2> items_;
  std::array<std::unordered_map<std::string, ItemIndex>, 2> itemIndex_;
};

struct PreprocessConfig {
  int minItem = 10;
  int minUser = 3;
  /// Repeat the filters until nothing changes instead of a single pass.
  bool iterateToFixedPoint = false;
};

struct PreprocessStats {
  std::size_t duplicatesRemoved = 0;
  std::size_t itemsDropped = 0;
  std::size_t usersDropped = 0;
  std::size_t passes = 0;
};

struct PreprocessResult {
  /// Source records first, then target records, each in input order.
  std::vector<InteractionRecord> records;
  IndexMaps maps;
  PreprocessStats stats;
};

/// Deduplicates, filters items, filters users per domain and keeps only users
/// present in both domains. Ids are indexed in lexicographic order. Throws
/// SparseCorpusError when nothing survives and ConfigError on empty input.
PreprocessResult preprocess(std::span<const InteractionRecord> source,
                            std::span<const InteractionRecord> target,
                            const PreprocessConfig& config = {});

struct MixedEvent {
  ItemIndex item = 0;  // unified
  Domain domain = Domain::Source;

  bool operator==(const MixedEvent&) const = default;
};

/// Chronological sequences of one user. Items are unified indices.
struct UserSequenceBundle {
  UserIndex user = 0;
  std::vector<ItemIndex> source;
  std::vector<ItemIndex> target;
  std::vector<MixedEvent> mixed;
  /// Position in `mixed` of every element of `target`.
  std::vector<std::size_t> targetMixedPos;

  ItemIndex testItem() const {
    return target.back();
  }
  ItemIndex validItem() const {
    return target[target.size() - 2];
  }
  std::size_t numTrainTarget() const {
    return target.size() - 2;
  }

  bool operator==(const UserSequenceBundle&) const = default;
};

struct SequenceSet {
  /// Sorted by user index.
  std::vector<UserSequenceBundle> bundles;
  std::size_t excludedUsers = 0;
};

/// Stable per-domain timestamp sort plus a stable merge where source events
/// precede target events on ties. Users with fewer than 3 target events are
/// excluded and counted.
SequenceSet buildSequences(std::span<const InteractionRecord> records,
                           const IndexMaps& maps);

struct LeaveOneOutSplit {
  std::vector<ItemIndex> train;
  ItemIndex valid = 0;
  ItemIndex test = 0;

  bool operator==(const LeaveOneOutSplit&) const = default;
};

LeaveOneOutSplit splitLeaveOneOut(const UserSequenceBundle& bundle);

struct DomainNames {
  std::string source = "source";
  std::string target = "target";
};

/// Everything downstream stages need from preprocessing.
struct Corpus {
  DomainNames domains;
  IndexMaps maps;
  std::vector<UserSequenceBundle> users;
  /// Metadata of retained items, keyed by item id.
  ItemMetadataStore metadata;

  const UserSequenceBundle* find(UserIndex user) const;
  std::size_t numInteractions(Domain domain) const;
};

/// Runs preprocess + buildSequences and attaches metadata (empty entries for
/// items without any).
Corpus buildCorpus(std::span<const InteractionRecord> source,
                   std::span<const InteractionRecord> target,
                   const ItemMetadataStore& metadata,
                   const PreprocessConfig& config, DomainNames domains = {},
                   PreprocessStats* stats = nullptr);

/// Dataset statistics (users, items, interactions, average length) per domain
/// as an aligned text table.
std::string corpusStatsTable(const Corpus& corpus);

inline constexpr int kCorpusFormatVersion = 1;

/// Writes manifest.json, users.tsv, items.tsv, metadata.jsonl,
/// sequences.jsonl, splits.tsv and stats.txt into `dir`.
void saveCorpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus loadCorpus(const std::filesystem::path& dir);

} // namespace xdrec
