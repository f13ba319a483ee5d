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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace xdrec {

struct Category {
  std::string name;
  std::vector<std::string> labels;
};

/// K high-level categories, each with an ordered subcategory vocabulary.
///
/// Every vocabulary carries the reserved label "Unknown" as its last entry
/// (appended when absent); it absorbs fallbacks and remapped outliers.
/// Subcategories are laid out back to back, which gives each
/// (category, label) pair a stable row in the subcategory embedding table.
class Taxonomy {
 public:
  static constexpr std::string_view kUnknown = "Unknown";

  Taxonomy() = default;
  /// Throws ConfigError on duplicate names, K == 0, or a category with fewer
  /// than two labels besides "Unknown".
  explicit Taxonomy(std::vector<Category> categories);

  std::size_t size() const {
    return categories_.size();
  }
  const std::vector<Category>& categories() const {
    return categories_;
  }
  const Category& category(std::size_t k) const {
    return categories_.at(k);
  }

  std::optional<std::size_t> categoryIndex(std::string_view name) const;
  /// Case-insensitive lookup; returns the position inside the vocabulary.
  std::optional<std::size_t> labelIndex(std::size_t category,
                                        std::string_view label) const;

  std::size_t numSubcategories() const {
    return totalLabels_;
  }
  /// Row of (category, label) in the flattened subcategory layout.
  std::size_t subcategoryRow(std::size_t category, std::size_t label) const {
    return offsets_.at(category) + label;
  }
  std::size_t unknownIndex(std::size_t category) const {
    return categories_.at(category).labels.size() - 1;
  }

  /// Content hash over the canonical JSON form.
  std::string hash() const;

  nlohmann::json toJson() const;
  static Taxonomy fromJson(const nlohmann::json& j);
  static Taxonomy load(const std::filesystem::path& path);

 private:
  std::vector<Category> categories_;
  std::vector<std::size_t> offsets_;
  std::size_t totalLabels_ = 0;
};

/// The shipped eight-category taxonomy.
Taxonomy defaultTaxonomy();

} // namespace xdrec
