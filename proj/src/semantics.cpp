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

#include <xdrec/semantics.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>

namespace xdrec {

using json = nlohmann::json;

const std::string_view kPromptTemplate =
  R"(You are a professional cross-domain recommendation expert. I will provide you with titles/descriptions for items that can be either {source_domain} or {target_domain}.

Given an item with the category [{category_path}], brand [{brand}], and the following title/description: [{title_description}].

Your task is to perform two main actions based on the input text and your world knowledge:
1. Extract Domain-Agnostic Features: Using the "Classification Schema" provided below, extract relevant domain-agnostic features. For EACH category in the schema, you MUST select at least one relevant label.
2. Generate a Semantic Summary: Create a single, concise sentence that serves as a semantic summary. This summary should encapsulate the essence of the item and bridge commonalities that could appeal to users interested in items with similar characteristics, regardless of their domain.

Classification Schema:
{schema}

Conversion Rules:
1. Analyze the input title/description. Leverage your world knowledge.
2. For EACH category in the "Classification Schema", you MUST select one or more labels.
3. Generate the "SemanticSummary" sentence as described above.
4. Output strictly in the following JSON format, including all categories:
{output_format})";

std::string_view provenanceName(Provenance p) {
  return p == Provenance::Llm ? "llm" : "fallback";
}

namespace {

void replaceAll(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool equalsIgnoreCase(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

const json* findKey(const json& obj, std::initializer_list<std::string_view> keys) {
  for (auto k : keys) {
    auto it = obj.find(std::string(k));
    if (it != obj.end()) {
      return &*it;
    }
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    for (auto k : keys) {
      if (equalsIgnoreCase(it.key(), k)) {
        return &*it;
      }
    }
  }
  return nullptr;
}

std::string schemaBlock(const Taxonomy& taxonomy) {
  std::string out = "[\n";
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    const auto& c = taxonomy.category(k);
    std::vector<std::string> labels(c.labels.begin(), c.labels.end() - 1);
    json entry = {{c.name, labels}};
    out += "  " + entry.dump();
    out += k + 1 < taxonomy.size() ? ",\n" : "\n";
  }
  out += "]";
  return out;
}

std::string outputFormatBlock(const Taxonomy& taxonomy) {
  std::string out = "{\n  \"Features\": {\n";
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    const auto& name = taxonomy.category(k).name;
    out += "    " + json(name).dump() + ": [<list of " + name + " labels>]";
    out += k + 1 < taxonomy.size() ? ",\n" : "\n";
  }
  out += "  },\n  \"SemanticSummary\": \"a single, concise sentence "
         "summarizing the item\"\n}";
  return out;
}

} // namespace

std::string renderPrompt(const ItemMetadata& item, const Taxonomy& taxonomy,
                         const DomainNames& domains) {
  std::string titleDesc = item.title;
  if (!item.description.empty()) {
    titleDesc += titleDesc.empty() ? item.description : "; " + item.description;
  }
  std::string out(kPromptTemplate);
  // structural slots first so item text cannot inject placeholders
  replaceAll(out, "{schema}", schemaBlock(taxonomy));
  replaceAll(out, "{output_format}", outputFormatBlock(taxonomy));
  replaceAll(out, "{source_domain}", domains.source);
  replaceAll(out, "{target_domain}", domains.target);
  const std::size_t catPos = out.find("{category_path}");
  out.replace(catPos, 15, item.categoryPath);
  const std::size_t brandPos =
    out.find("{brand}", catPos + item.categoryPath.size());
  out.replace(brandPos, 7, item.brand);
  const std::size_t titlePos =
    out.find("{title_description}", brandPos + item.brand.size());
  out.replace(titlePos, 19, titleDesc);
  return out;
}

ValidationResult validateProfile(std::string_view raw,
                                 const Taxonomy& taxonomy) {
  using Kind = ValidationError::Kind;
  ValidationResult result;
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  json j;
  if (open != std::string_view::npos && close != std::string_view::npos &&
      close > open) {
    j = json::parse(raw.substr(open, close - open + 1), nullptr, false);
  } else {
    j = json::value_t::discarded;
  }
  if (j.is_discarded() || !j.is_object()) {
    result.errors.push_back(
      {Kind::ParseFailure, "", "", "response is not a JSON object"});
    return result;
  }

  ItemSemanticProfile profile;
  profile.assignments.resize(taxonomy.size());
  const json* features = findKey(j, {"features"});
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    const auto& cat = taxonomy.category(k);
    const json* labels = features != nullptr && features->is_object()
                           ? findKey(*features, {cat.name})
                           : nullptr;
    if (labels == nullptr) {
      result.errors.push_back({Kind::MissingCategory, cat.name, "",
                               "missing category " + cat.name});
      continue;
    }
    json list = labels->is_string() ? json::array({*labels}) : *labels;
    if (!list.is_array() || list.empty()) {
      result.errors.push_back({Kind::EmptyLabels, cat.name, "",
                               "no labels for category " + cat.name});
      continue;
    }
    std::set<std::size_t> chosen;
    for (const auto& l : list) {
      const std::string label = l.is_string() ? trim(l.get<std::string>())
                                              : l.dump();
      const auto idx = taxonomy.labelIndex(k, label);
      if (!idx) {
        result.errors.push_back({Kind::OutOfVocabulary, cat.name, label,
                                 "label " + label + " not in " + cat.name});
        continue;
      }
      if (chosen.insert(*idx).second) {
        profile.assignments[k].push_back(cat.labels[*idx]);
      }
    }
  }
  const json* summary = findKey(j, {"semantic_summary", "SemanticSummary"});
  if (summary == nullptr || !summary->is_string() ||
      trim(summary->get<std::string>()).empty()) {
    result.errors.push_back(
      {Kind::MissingSummary, "", "", "missing or empty semantic summary"});
  } else {
    profile.summary = trim(summary->get<std::string>());
  }
  if (result.errors.empty()) {
    profile.provenance = Provenance::Llm;
    result.profile = std::move(profile);
  }
  return result;
}

std::string serializeResponse(const ItemSemanticProfile& profile,
                              const Taxonomy& taxonomy) {
  json features = json::object();
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    features[taxonomy.category(k).name] = profile.assignments.at(k);
  }
  return json{{"features", features}, {"semantic_summary", profile.summary}}
    .dump();
}

ItemSemanticProfile fallbackProfile(ItemIndex item, const std::string& itemId,
                                    const ItemMetadata& metadata,
                                    const Taxonomy& taxonomy) {
  ItemSemanticProfile p;
  p.item = item;
  p.itemId = itemId;
  p.provenance = Provenance::Fallback;
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    p.assignments.push_back({std::string(Taxonomy::kUnknown)});
  }
  p.summary = metadata.title;
  if (!metadata.description.empty()) {
    p.summary += p.summary.empty() ? metadata.description
                                   : ". " + metadata.description;
  }
  return p;
}

SemanticCache::SemanticCache(std::filesystem::path root)
  : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::string SemanticCache::key(const std::string& itemId,
                               const std::string& taxonomyHash,
                               const std::string& templateHash) {
  return sha256Hex(itemId + '\x1f' + taxonomyHash + '\x1f' + templateHash);
}

std::filesystem::path SemanticCache::pathFor(const std::string& key) const {
  return root_ / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
}

std::optional<SemanticCache::Entry> SemanticCache::get(
  const std::string& key) const {
  std::ifstream in(pathFor(key), std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return std::nullopt;
  }
  try {
    Entry e{j.at("item_id").get<std::string>(),
            j.at("taxonomy_hash").get<std::string>(),
            j.at("template_hash").get<std::string>(),
            j.at("raw").get<std::string>()};
    return e;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void SemanticCache::put(const std::string& key, const Entry& entry) {
  const auto path = pathFor(key);
  std::filesystem::create_directories(path.parent_path());
  json j = {{"item_id", entry.itemId},
            {"taxonomy_hash", entry.taxonomyHash},
            {"template_hash", entry.templateHash},
            {"raw", entry.raw}};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(
                     std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write cache entry " + tmp.string());
    }
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

SemanticExtractor::SemanticExtractor(LlmClient& client,
                                     const Taxonomy& taxonomy,
                                     SemanticCache* cache,
                                     ExtractionConfig config)
  : client_(client),
    taxonomy_(taxonomy),
    cache_(cache),
    config_(std::move(config)),
    taxonomyHash_(taxonomy.hash()),
    templateHash_(sha256Hex(kPromptTemplate)),
    bucket_(config_.requestsPerSecond) {
  if (config_.maxRetries < 1) {
    throw ConfigError("max_retries must be at least 1");
  }
}

ItemSemanticProfile SemanticExtractor::extract(ItemIndex item,
                                               const std::string& itemId,
                                               const ItemMetadata& metadata) {
  const std::string key =
    SemanticCache::key(itemId, taxonomyHash_, templateHash_);
  auto finish = [&](ItemSemanticProfile p) {
    p.item = item;
    p.itemId = itemId;
    return p;
  };
  {
    std::lock_guard lock(mu_);
    ++stats_.items;
  }
  if (cache_ != nullptr) {
    if (auto e = cache_->get(key);
        e && e->itemId == itemId && e->taxonomyHash == taxonomyHash_ &&
        e->templateHash == templateHash_) {
      auto res = validateProfile(e->raw, taxonomy_);
      if (res.ok()) {
        std::lock_guard lock(mu_);
        ++stats_.cacheHits;
        return finish(std::move(*res.profile));
      }
      spdlog::warn("cache entry for item {} is invalid, recomputing", itemId);
    } else if (std::filesystem::exists(cache_->pathFor(key))) {
      spdlog::warn("cache entry for item {} is corrupted, recomputing", itemId);
    }
  }

  const std::string prompt =
    renderPrompt(metadata, taxonomy_, config_.domains);
  for (int attempt = 0; attempt < config_.maxRetries; ++attempt) {
    bucket_.acquire();
    std::string raw;
    try {
      {
        std::lock_guard lock(mu_);
        ++stats_.calls;
      }
      raw = client_.send(prompt, config_.generation);
    } catch (const TransportError& e) {
      {
        std::lock_guard lock(mu_);
        ++stats_.transportFailures;
      }
      spdlog::warn("LLM call for item {} failed: {}", itemId, e.what());
      if (config_.backoff.count() > 0 && attempt + 1 < config_.maxRetries) {
        std::this_thread::sleep_for(config_.backoff * (1 << attempt));
      }
      continue;
    }
    auto res = validateProfile(raw, taxonomy_);
    if (res.ok()) {
      if (cache_ != nullptr) {
        cache_->put(key, {itemId, taxonomyHash_, templateHash_, raw});
      }
      return finish(std::move(*res.profile));
    }
    std::lock_guard lock(mu_);
    ++stats_.invalidResponses;
  }
  spdlog::warn("item {} fell back to the Unknown profile after {} attempts",
               itemId, config_.maxRetries);
  {
    std::lock_guard lock(mu_);
    ++stats_.fallbacks;
  }
  return fallbackProfile(item, itemId, metadata, taxonomy_);
}

std::vector<ItemSemanticProfile> SemanticExtractor::extractAll(
  const Corpus& corpus) {
  const std::size_t n = corpus.maps.numUnifiedItems();
  std::vector<ItemSemanticProfile> out(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k; (k = next++) < n;) {
      const auto item = static_cast<ItemIndex>(k);
      const auto& id = corpus.maps.itemId(item);
      auto it = corpus.metadata.find(id);
      const ItemMetadata meta =
        it == corpus.metadata.end() ? ItemMetadata{} : it->second;
      out[k] = extract(item, id, meta);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, config_.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
  }
  const auto s = stats();
  if (s.fallbackRate() > config_.maxFallbackRate) {
    throw ExtractionQualityError(
      "fallback rate " + std::to_string(s.fallbackRate()) + " exceeds " +
      std::to_string(config_.maxFallbackRate));
  }
  return out;
}

ExtractionStats SemanticExtractor::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<ItemSemanticProfile> filterOutliers(
  std::vector<ItemSemanticProfile> profiles, const Taxonomy& taxonomy,
  int minLabelFrequency) {
  std::vector<std::map<std::string, int>> counts(taxonomy.size());
  for (const auto& p : profiles) {
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      std::set<std::string> distinct(p.assignments.at(k).begin(),
                                     p.assignments.at(k).end());
      for (const auto& l : distinct) {
        ++counts[k][l];
      }
    }
  }
  const std::string unknown(Taxonomy::kUnknown);
  for (auto& p : profiles) {
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      std::vector<std::string> kept;
      for (const auto& l : p.assignments[k]) {
        const std::string& mapped =
          l != unknown && counts[k][l] < minLabelFrequency ? unknown : l;
        if (std::find(kept.begin(), kept.end(), mapped) == kept.end()) {
          kept.push_back(mapped);
        }
      }
      p.assignments[k] = std::move(kept);
    }
  }
  return profiles;
}

void writeProfiles(const std::filesystem::path& path,
                   const std::vector<ItemSemanticProfile>& profiles,
                   const Taxonomy& taxonomy) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto& p : profiles) {
    json features = json::object();
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      features[taxonomy.category(k).name] = p.assignments.at(k);
    }
    json j = {{"item_id", p.itemId},
              {"item", p.item},
              {"features", features},
              {"semantic_summary", p.summary},
              {"provenance", std::string(provenanceName(p.provenance))}};
    out << j.dump() << '\n';
  }
}

std::vector<ItemSemanticProfile> readProfiles(const std::filesystem::path& path,
                                              const Taxonomy& taxonomy,
                                              const IndexMaps& maps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  const std::size_t n = maps.numUnifiedItems();
  std::vector<ItemSemanticProfile> out(n);
  std::vector<bool> seen(n, false);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw FormatError("bad profile line in " + path.string());
    }
    const auto item = j.at("item").get<ItemIndex>();
    const auto itemId = j.at("item_id").get<std::string>();
    if (item < 0 || static_cast<std::size_t>(item) >= n ||
        maps.itemId(item) != itemId) {
      throw FormatError("profile for " + itemId +
                        " does not match the corpus index");
    }
    const bool fallback = j.value("provenance", "llm") == "fallback";
    const std::string summary = j.at("semantic_summary").get<std::string>();
    // fallback summaries may legitimately be empty
    json response = {{"features", j.at("features")},
                     {"semantic_summary", summary.empty() ? "-" : summary}};
    auto res = validateProfile(response.dump(), taxonomy);
    if (!res.ok() || (summary.empty() && !fallback)) {
      throw FormatError("profile for " + itemId + " violates the taxonomy" +
                        (res.ok() ? "" : ": " + res.errors.front().message));
    }
    ItemSemanticProfile p = std::move(*res.profile);
    p.item = item;
    p.itemId = itemId;
    p.summary = summary;
    p.provenance = fallback ? Provenance::Fallback : Provenance::Llm;
    out[item] = std::move(p);
    seen[item] = true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!seen[k]) {
      throw FormatError("no profile for item " + maps.itemId(
                                                   static_cast<ItemIndex>(k)));
    }
  }
  return out;
}

} // namespace xdrec
