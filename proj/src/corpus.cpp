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

#include <xdrec/corpus.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <xdrec/errors.h>

namespace xdrec {

using json = nlohmann::json;

std::string_view domainTag(Domain domain) {
  return domain == Domain::Source ? "S" : "T";
}

namespace {

std::vector<std::string_view> splitTabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parseNumber(std::string_view s, T& out) {
  if (s.empty()) {
    return false;
  }
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::optional<InteractionRecord> parseLine(std::string_view line,
                                           Domain domain) {
  if (!line.empty() && line.back() == '\r') {
    line.remove_suffix(1);
  }
  const auto fields = splitTabs(line);
  if (fields.size() != 4 || fields[0].empty() || fields[1].empty()) {
    return std::nullopt;
  }
  double rating = 0.0;
  std::int64_t ts = 0;
  if (!parseNumber(fields[2], rating) || !parseNumber(fields[3], ts) ||
      ts < 0) {
    return std::nullopt;
  }
  InteractionRecord r;
  r.userId = std::string(fields[0]);
  r.itemId = std::string(fields[1]);
  r.domain = domain;
  r.timestamp = ts;
  return r;
}

bool isBlank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

std::string dedupKey(const InteractionRecord& r) {
  std::string key;
  key.reserve(r.userId.size() + r.itemId.size() + 24);
  key += r.userId;
  key += '\x1f';
  key += r.itemId;
  key += '\x1f';
  key += domainTag(r.domain);
  key += '\x1f';
  key += std::to_string(r.timestamp);
  return key;
}

std::string domainKey(Domain d, const std::string& id) {
  std::string key(1, d == Domain::Source ? 'S' : 'T');
  key += id;
  return key;
}

// One round of item filter -> per-domain user filter -> intersection.
std::vector<InteractionRecord> filterOnce(
  const std::vector<InteractionRecord>& in, const PreprocessConfig& cfg) {
  std::unordered_map<std::string, int> itemCount;
  for (const auto& r : in) {
    ++itemCount[domainKey(r.domain, r.itemId)];
  }
  std::vector<InteractionRecord> afterItems;
  afterItems.reserve(in.size());
  for (const auto& r : in) {
    if (itemCount[domainKey(r.domain, r.itemId)] >= cfg.minItem) {
      afterItems.push_back(r);
    }
  }

  std::unordered_map<std::string, int> userCount;
  for (const auto& r : afterItems) {
    ++userCount[domainKey(r.domain, r.userId)];
  }
  std::vector<InteractionRecord> afterUsers;
  afterUsers.reserve(afterItems.size());
  std::unordered_set<std::string> inSource, inTarget;
  for (const auto& r : afterItems) {
    if (userCount[domainKey(r.domain, r.userId)] >= cfg.minUser) {
      afterUsers.push_back(r);
      (r.domain == Domain::Source ? inSource : inTarget).insert(r.userId);
    }
  }

  std::vector<InteractionRecord> out;
  out.reserve(afterUsers.size());
  for (const auto& r : afterUsers) {
    if (inSource.count(r.userId) != 0 && inTarget.count(r.userId) != 0) {
      out.push_back(r);
    }
  }
  return out;
}

std::size_t distinctUsers(const std::vector<InteractionRecord>& rs) {
  std::unordered_set<std::string> s;
  for (const auto& r : rs) {
    s.insert(r.userId);
  }
  return s.size();
}

std::size_t distinctItems(const std::vector<InteractionRecord>& rs) {
  std::unordered_set<std::string> s;
  for (const auto& r : rs) {
    s.insert(domainKey(r.domain, r.itemId));
  }
  return s.size();
}

std::ofstream openOut(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + p.string());
  }
  return out;
}

std::ifstream openIn(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + p.string());
  }
  return in;
}

std::vector<std::size_t> mixedPositions(const UserSequenceBundle& b) {
  std::vector<std::size_t> pos;
  pos.reserve(b.target.size());
  for (std::size_t k = 0; k < b.mixed.size(); ++k) {
    if (b.mixed[k].domain == Domain::Target) {
      pos.push_back(k);
    }
  }
  return pos;
}

} // namespace

ParseResult parseInteractions(std::istream& in, Domain domain,
                              double maxMalformedFraction) {
  ParseResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (isBlank(line)) {
      continue;
    }
    ++result.lines;
    if (auto r = parseLine(line, domain)) {
      result.records.push_back(std::move(*r));
    } else {
      ++result.malformed;
    }
  }
  if (in.bad()) {
    throw IoError("read error while parsing interactions");
  }
  if (result.lines > 0 &&
      static_cast<double>(result.malformed) >
        maxMalformedFraction * static_cast<double>(result.lines)) {
    throw FormatError("interaction file has " +
                      std::to_string(result.malformed) + " malformed lines of " +
                      std::to_string(result.lines));
  }
  if (result.malformed > 0) {
    spdlog::warn("skipped {} malformed interaction lines", result.malformed);
  }
  return result;
}

ParseResult parseInteractions(const std::filesystem::path& path, Domain domain,
                              double maxMalformedFraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read interaction file " + path.string());
  }
  try {
    return parseInteractions(in, domain, maxMalformedFraction);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ItemMetadataStore parseMetadata(std::istream& in) {
  ItemMetadataStore store;
  std::string line;
  std::size_t lineNo = 0;
  auto field = [](const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      return std::string();
    }
    return it->is_string() ? it->get<std::string>() : it->dump();
  };
  while (std::getline(in, line)) {
    ++lineNo;
    if (isBlank(line)) {
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("item_id")) {
      throw FormatError("metadata line " + std::to_string(lineNo) +
                        " is not an object with item_id");
    }
    ItemMetadata m{field(j, "title"), field(j, "category_path"),
                   field(j, "brand"), field(j, "description")};
    store[field(j, "item_id")] = std::move(m);
  }
  return store;
}

ItemMetadataStore parseMetadata(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read metadata file " + path.string());
  }
  return parseMetadata(in);
}

IndexMaps::IndexMaps(std::vector<std::string> users,
                     std::vector<std::string> sourceItems,
                     std::vector<std::string> targetItems)
  : users_(std::move(users)), items_{std::move(sourceItems),
                                     std::move(targetItems)} {
  for (std::size_t k = 0; k < users_.size(); ++k) {
    if (!userIndex_.emplace(users_[k], static_cast<UserIndex>(k)).second) {
      throw FormatError("duplicate user id " + users_[k]);
    }
  }
  for (int d = 0; d < 2; ++d) {
    for (std::size_t k = 0; k < items_[d].size(); ++k) {
      if (!itemIndex_[d].emplace(items_[d][k], static_cast<ItemIndex>(k))
             .second) {
        throw FormatError("duplicate item id " + items_[d][k]);
      }
    }
  }
}

std::optional<UserIndex> IndexMaps::userIndex(const std::string& userId) const {
  auto it = userIndex_.find(userId);
  if (it == userIndex_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::optional<ItemIndex> IndexMaps::localIndex(Domain domain,
                                               const std::string& itemId) const {
  const auto& m = itemIndex_[static_cast<int>(domain)];
  auto it = m.find(itemId);
  if (it == m.end()) {
    return std::nullopt;
  }
  return it->second;
}

const std::string& IndexMaps::userId(UserIndex user) const {
  return users_.at(static_cast<std::size_t>(user));
}

const std::string& IndexMaps::itemId(Domain domain, ItemIndex local) const {
  return items_[static_cast<int>(domain)].at(static_cast<std::size_t>(local));
}

const std::string& IndexMaps::itemId(ItemIndex unified) const {
  const auto [d, local] = split(unified);
  return itemId(d, local);
}

ItemIndex IndexMaps::unified(Domain domain, ItemIndex local) const {
  if (local < 0 ||
      static_cast<std::size_t>(local) >= numItems(domain)) {
    throw std::out_of_range("local item index out of range");
  }
  return domain == Domain::Source ? local : local + targetOffset();
}

std::pair<Domain, ItemIndex> IndexMaps::split(ItemIndex unified) const {
  if (unified < 0 ||
      static_cast<std::size_t>(unified) >= numUnifiedItems()) {
    throw std::out_of_range("unified item index out of range");
  }
  if (unified < targetOffset()) {
    return {Domain::Source, unified};
  }
  return {Domain::Target, unified - targetOffset()};
}

PreprocessResult preprocess(std::span<const InteractionRecord> source,
                            std::span<const InteractionRecord> target,
                            const PreprocessConfig& config) {
  if (source.empty() || target.empty()) {
    throw ConfigError("preprocess needs nonempty source and target records");
  }
  PreprocessResult result;

  std::vector<InteractionRecord> records;
  records.reserve(source.size() + target.size());
  std::unordered_set<std::string> seen;
  auto take = [&](std::span<const InteractionRecord> rs, Domain expected) {
    for (const auto& r : rs) {
      if (r.domain != expected) {
        throw ConfigError("record of item " + r.itemId +
                          " is tagged with the wrong domain");
      }
      if (seen.insert(dedupKey(r)).second) {
        records.push_back(r);
      } else {
        ++result.stats.duplicatesRemoved;
      }
    }
  };
  take(source, Domain::Source);
  take(target, Domain::Target);

  const std::size_t usersBefore = distinctUsers(records);
  const std::size_t itemsBefore = distinctItems(records);
  while (true) {
    ++result.stats.passes;
    auto next = filterOnce(records, config);
    const bool changed = next.size() != records.size();
    records = std::move(next);
    if (!config.iterateToFixedPoint || !changed) {
      break;
    }
  }
  if (records.empty()) {
    throw SparseCorpusError("corpus too sparse: nothing survives filtering");
  }
  result.stats.usersDropped = usersBefore - distinctUsers(records);
  result.stats.itemsDropped = itemsBefore - distinctItems(records);

  std::set<std::string> users;
  std::array<std::set<std::string>, 2> items;
  for (const auto& r : records) {
    users.insert(r.userId);
    items[static_cast<int>(r.domain)].insert(r.itemId);
  }
  result.maps = IndexMaps({users.begin(), users.end()},
                          {items[0].begin(), items[0].end()},
                          {items[1].begin(), items[1].end()});
  result.records = std::move(records);
  return result;
}

SequenceSet buildSequences(std::span<const InteractionRecord> records,
                           const IndexMaps& maps) {
  struct Event {
    std::int64_t ts;
    ItemIndex item;
  };
  const std::size_t nUsers = maps.numUsers();
  std::vector<std::array<std::vector<Event>, 2>> perUser(nUsers);
  for (const auto& r : records) {
    const auto u = maps.userIndex(r.userId);
    const auto local = maps.localIndex(r.domain, r.itemId);
    if (!u || !local) {
      throw FormatError("record references an unindexed user or item");
    }
    perUser[*u][static_cast<int>(r.domain)].push_back(
      {r.timestamp, maps.unified(r.domain, *local)});
  }

  SequenceSet out;
  const auto byTime = [](const Event& a, const Event& b) { return a.ts < b.ts; };
  for (std::size_t u = 0; u < nUsers; ++u) {
    auto& src = perUser[u][0];
    auto& tgt = perUser[u][1];
    if (tgt.size() < 3) {
      ++out.excludedUsers;
      continue;
    }
    std::stable_sort(src.begin(), src.end(), byTime);
    std::stable_sort(tgt.begin(), tgt.end(), byTime);

    UserSequenceBundle b;
    b.user = static_cast<UserIndex>(u);
    for (const auto& e : src) {
      b.source.push_back(e.item);
    }
    for (const auto& e : tgt) {
      b.target.push_back(e.item);
    }
    std::size_t i = 0, j = 0;
    while (i < src.size() || j < tgt.size()) {
      const bool takeSource =
        j == tgt.size() || (i < src.size() && src[i].ts <= tgt[j].ts);
      if (takeSource) {
        b.mixed.push_back({src[i++].item, Domain::Source});
      } else {
        b.targetMixedPos.push_back(b.mixed.size());
        b.mixed.push_back({tgt[j++].item, Domain::Target});
      }
    }
    out.bundles.push_back(std::move(b));
  }
  if (out.excludedUsers > 0) {
    spdlog::warn("excluded {} users with fewer than 3 target interactions",
                 out.excludedUsers);
  }
  return out;
}

LeaveOneOutSplit splitLeaveOneOut(const UserSequenceBundle& bundle) {
  const std::size_t n = bundle.target.size();
  if (n < 3) {
    throw ConfigError("leave-one-out split needs at least 3 target events");
  }
  LeaveOneOutSplit s;
  s.train.assign(bundle.target.begin(), bundle.target.end() - 2);
  s.valid = bundle.target[n - 2];
  s.test = bundle.target[n - 1];
  return s;
}

const UserSequenceBundle* Corpus::find(UserIndex user) const {
  auto it = std::lower_bound(
    users.begin(), users.end(), user,
    [](const UserSequenceBundle& b, UserIndex u) { return b.user < u; });
  if (it == users.end() || it->user != user) {
    return nullptr;
  }
  return &*it;
}

std::size_t Corpus::numInteractions(Domain domain) const {
  std::size_t n = 0;
  for (const auto& b : users) {
    n += domain == Domain::Source ? b.source.size() : b.target.size();
  }
  return n;
}

Corpus buildCorpus(std::span<const InteractionRecord> source,
                   std::span<const InteractionRecord> target,
                   const ItemMetadataStore& metadata,
                   const PreprocessConfig& config, DomainNames domains,
                   PreprocessStats* stats) {
  auto pre = preprocess(source, target, config);
  auto seqs = buildSequences(pre.records, pre.maps);
  if (seqs.bundles.empty()) {
    throw SparseCorpusError("corpus too sparse: no user has 3 target events");
  }
  Corpus c;
  c.domains = std::move(domains);
  c.maps = std::move(pre.maps);
  c.users = std::move(seqs.bundles);
  for (Domain d : {Domain::Source, Domain::Target}) {
    for (const auto& id : c.maps.items(d)) {
      auto it = metadata.find(id);
      c.metadata[id] = it == metadata.end() ? ItemMetadata{} : it->second;
    }
  }
  if (stats != nullptr) {
    *stats = pre.stats;
  }
  return c;
}

std::string corpusStatsTable(const Corpus& corpus) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "Dataset" << std::right << std::setw(18)
     << "Overlapped Users" << std::setw(10) << "# Items" << std::setw(16)
     << "# Interactions" << std::setw(11) << "Avg. Len." << '\n';
  for (Domain d : {Domain::Source, Domain::Target}) {
    const std::size_t n = corpus.numInteractions(d);
    const double avg =
      corpus.users.empty()
        ? 0.0
        : static_cast<double>(n) / static_cast<double>(corpus.users.size());
    const auto& name =
      d == Domain::Source ? corpus.domains.source : corpus.domains.target;
    os << std::left << std::setw(20) << name << std::right << std::setw(18)
       << corpus.users.size() << std::setw(10) << corpus.maps.numItems(d)
       << std::setw(16) << n << std::setw(11) << std::fixed
       << std::setprecision(2) << avg << '\n';
  }
  return os.str();
}

void saveCorpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    json m;
    m["format"] = "xdrec-corpus";
    m["version"] = kCorpusFormatVersion;
    m["domains"] = {{"source", corpus.domains.source},
                    {"target", corpus.domains.target}};
    m["num_users"] = corpus.maps.numUsers();
    m["num_source_items"] = corpus.maps.numItems(Domain::Source);
    m["num_target_items"] = corpus.maps.numItems(Domain::Target);
    m["num_bundles"] = corpus.users.size();
    openOut(dir / "manifest.json") << m.dump(2) << '\n';
  }
  {
    auto out = openOut(dir / "users.tsv");
    for (std::size_t u = 0; u < corpus.maps.numUsers(); ++u) {
      out << u << '\t' << corpus.maps.users()[u] << '\n';
    }
  }
  {
    auto items = openOut(dir / "items.tsv");
    auto meta = openOut(dir / "metadata.jsonl");
    for (std::size_t k = 0; k < corpus.maps.numUnifiedItems(); ++k) {
      const auto [d, local] = corpus.maps.split(static_cast<ItemIndex>(k));
      const auto& id = corpus.maps.itemId(d, local);
      items << k << '\t' << domainTag(d) << '\t' << local << '\t' << id << '\n';
      auto it = corpus.metadata.find(id);
      const ItemMetadata m =
        it == corpus.metadata.end() ? ItemMetadata{} : it->second;
      json j = {{"item_id", id},
                {"title", m.title},
                {"category_path", m.categoryPath},
                {"brand", m.brand},
                {"description", m.description}};
      meta << j.dump() << '\n';
    }
  }
  {
    auto seqs = openOut(dir / "sequences.jsonl");
    auto splits = openOut(dir / "splits.tsv");
    for (const auto& b : corpus.users) {
      json mixed = json::array();
      for (const auto& e : b.mixed) {
        mixed.push_back({e.item, std::string(domainTag(e.domain))});
      }
      json j = {{"user", b.user},
                {"source", b.source},
                {"target", b.target},
                {"mixed", mixed}};
      seqs << j.dump() << '\n';
      splits << b.user << '\t' << b.numTrainTarget() << '\t' << b.validItem()
             << '\t' << b.testItem() << '\n';
    }
  }
  openOut(dir / "stats.txt") << corpusStatsTable(corpus);
}

Corpus loadCorpus(const std::filesystem::path& dir) {
  Corpus c;
  {
    auto in = openIn(dir / "manifest.json");
    json m = json::parse(in, nullptr, false);
    if (m.is_discarded() || m.value("format", "") != "xdrec-corpus") {
      throw FormatError(dir.string() + " is not a corpus bundle");
    }
    if (m.value("version", 0) != kCorpusFormatVersion) {
      throw FormatError("unsupported corpus bundle version");
    }
    c.domains.source = m["domains"].value("source", "source");
    c.domains.target = m["domains"].value("target", "target");
  }
  std::vector<std::string> users;
  {
    auto in = openIn(dir / "users.tsv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = splitTabs(line);
      if (f.size() != 2) {
        throw FormatError("bad users.tsv line");
      }
      users.emplace_back(f[1]);
    }
  }
  std::array<std::vector<std::string>, 2> items;
  {
    auto in = openIn(dir / "items.tsv");
    std::string line;
    while (std::getline(in, line)) {
      const auto f = splitTabs(line);
      if (f.size() != 4 || (f[1] != "S" && f[1] != "T")) {
        throw FormatError("bad items.tsv line");
      }
      items[f[1] == "S" ? 0 : 1].emplace_back(f[3]);
    }
  }
  c.maps = IndexMaps(std::move(users), std::move(items[0]), std::move(items[1]));
  {
    auto in = openIn(dir / "metadata.jsonl");
    c.metadata = parseMetadata(in);
  }
  {
    auto in = openIn(dir / "sequences.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw FormatError("bad sequences.jsonl line");
      }
      UserSequenceBundle b;
      b.user = j.at("user").get<UserIndex>();
      b.source = j.at("source").get<std::vector<ItemIndex>>();
      b.target = j.at("target").get<std::vector<ItemIndex>>();
      for (const auto& e : j.at("mixed")) {
        b.mixed.push_back(
          {e.at(0).get<ItemIndex>(),
           e.at(1).get<std::string>() == "S" ? Domain::Source : Domain::Target});
      }
      b.targetMixedPos = mixedPositions(b);
      if (b.target.size() < 3 ||
          b.targetMixedPos.size() != b.target.size() ||
          b.mixed.size() != b.source.size() + b.target.size()) {
        throw FormatError("inconsistent bundle for user " +
                          std::to_string(b.user));
      }
      c.users.push_back(std::move(b));
    }
  }
  return c;
}

} // namespace xdrec
