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

#include <xdrec/taxonomy.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>

namespace xdrec {

using json = nlohmann::json;

namespace {

bool equalsIgnoreCase(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

} // namespace

Taxonomy::Taxonomy(std::vector<Category> categories)
  : categories_(std::move(categories)) {
  if (categories_.empty()) {
    throw ConfigError("taxonomy needs at least one category");
  }
  std::set<std::string> names;
  for (auto& c : categories_) {
    if (c.name.empty() || !names.insert(c.name).second) {
      throw ConfigError("taxonomy category names must be unique and nonempty");
    }
    std::set<std::string> seen;
    std::size_t authored = 0;
    for (const auto& l : c.labels) {
      std::string lower(l);
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      if (l.empty() || !seen.insert(lower).second) {
        throw ConfigError("duplicate or empty label in category " + c.name);
      }
      if (!equalsIgnoreCase(l, kUnknown)) {
        ++authored;
      }
    }
    if (authored < 2) {
      throw ConfigError("category " + c.name +
                        " needs at least two subcategories");
    }
    // keep Unknown last
    auto it = std::find_if(c.labels.begin(), c.labels.end(),
                           [](const std::string& l) {
                             return equalsIgnoreCase(l, kUnknown);
                           });
    if (it != c.labels.end()) {
      c.labels.erase(it);
    }
    c.labels.emplace_back(kUnknown);
  }
  for (const auto& c : categories_) {
    offsets_.push_back(totalLabels_);
    totalLabels_ += c.labels.size();
  }
}

std::optional<std::size_t> Taxonomy::categoryIndex(std::string_view name) const {
  for (std::size_t k = 0; k < categories_.size(); ++k) {
    if (categories_[k].name == name) {
      return k;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> Taxonomy::labelIndex(std::size_t category,
                                                std::string_view label) const {
  const auto& labels = categories_.at(category).labels;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (equalsIgnoreCase(labels[k], label)) {
      return k;
    }
  }
  return std::nullopt;
}

std::string Taxonomy::hash() const {
  return sha256Hex(toJson().dump());
}

json Taxonomy::toJson() const {
  json cats = json::array();
  for (const auto& c : categories_) {
    cats.push_back({{"name", c.name}, {"labels", c.labels}});
  }
  return {{"categories", cats}};
}

Taxonomy Taxonomy::fromJson(const json& j) {
  if (!j.is_object() || !j.contains("categories") ||
      !j["categories"].is_array()) {
    throw ConfigError("taxonomy JSON needs a categories array");
  }
  std::vector<Category> cats;
  for (const auto& c : j["categories"]) {
    cats.push_back({c.at("name").get<std::string>(),
                    c.at("labels").get<std::vector<std::string>>()});
  }
  return Taxonomy(std::move(cats));
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read taxonomy " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("taxonomy " + path.string() + " is not valid JSON");
  }
  return fromJson(j);
}

Taxonomy defaultTaxonomy() {
  return Taxonomy({
    {"Genre",
     {"Action", "Comedy", "Drama", "Thriller", "Sci-Fi", "Romance", "Fantasy",
      "Horror", "Mystery", "Historical", "Documentary", "Adventure"}},
    {"Target Audience",
     {"Children", "Young Adult", "Adult", "Family", "General"}},
    {"Themes",
     {"Love", "Loss", "Friendship", "Betrayal", "Revenge", "Coming of Age",
      "Social Issues", "Political Intrigue", "Survival", "Identity"}},
    {"Setting",
     {"Historical", "Contemporary", "Futuristic", "Urban", "Rural",
      "Fantasy World", "Domestic"}},
    {"Tone",
     {"Serious", "Dark", "Lighthearted", "Humorous", "Uplifting",
      "Suspenseful"}},
    {"Pace", {"Slow-Paced", "Moderate-Paced", "Fast-Paced"}},
    {"Format/Length", {"Short", "Medium", "Long", "Series"}},
    {"Narrative Style",
     {"First Person", "Third Person Limited", "Third Person Omniscient",
      "Ensemble", "Non-Narrative"}},
  });
}

} // namespace xdrec
