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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <xdrec/corpus.h>
#include <xdrec/model.h>
#include <xdrec/representation.h>
#include <xdrec/trainer.h>

namespace xdrec {

/// Everything one run needs, read from a single JSON file. Relative paths
/// resolve against the directory of that file.
struct RunConfig {
  struct Paths {
    std::filesystem::path sourceInteractions;
    std::filesystem::path targetInteractions;
    std::filesystem::path metadata;
    std::filesystem::path workdir;
    /// Empty means the built-in taxonomy.
    std::filesystem::path taxonomy;
  } paths;

  DomainNames domains;
  PreprocessConfig corpus;

  struct Llm {
    /// "mock" replays responses from `mockDir`; "http" calls `baseUrl`.
    std::string provider = "mock";
    std::filesystem::path mockDir;
    std::string baseUrl;
    std::string model;
    std::string apiKeyEnv = "XDREC_LLM_API_KEY";
    int timeoutSeconds = 60;
    int maxRetries = 3;
    double requestsPerSecond = 0.0;
    int backoffMs = 500;
    double maxFallbackRate = 0.20;
    std::size_t workers = 1;
    double temperature = 0.0;
    int maxTokens = 512;
    int minLabelFrequency = 2;
    /// Overridden by the XDREC_CACHE_DIR environment variable; empty means
    /// `<workdir>/cache`.
    std::filesystem::path cacheDir;
  } llm;

  struct Encoder {
    /// "hashed" (offline trigram hashing) or "http" (embeddings endpoint).
    std::string provider = "hashed";
    std::string baseUrl;
    std::string model;
    std::string apiKeyEnv = "XDREC_EMBED_API_KEY";
    bool allowFallback = true;
  } encoder;

  HyperParams hyper;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t negatives = 100;

  nlohmann::json toJson() const;
  /// `baseDir` anchors relative paths.
  static RunConfig fromJson(const nlohmann::json& j,
                            const std::filesystem::path& baseDir = {});
  /// Applies `key.path=value` overrides before parsing. Values that parse as
  /// JSON are used as such, anything else as a string.
  static RunConfig load(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});

  std::filesystem::path corpusDir() const {
    return paths.workdir / "corpus";
  }
  std::filesystem::path profilesPath() const {
    return paths.workdir / "profiles.jsonl";
  }
  std::filesystem::path cachePath() const;
  std::filesystem::path trainDir() const {
    return paths.workdir / "train" / ablationKey(train.ablation);
  }
  std::filesystem::path checkpointPath() const {
    return trainDir() / "checkpoint.json";
  }
};

/// Sets `a.b.c` in a JSON object, creating intermediate objects.
void applyOverride(nlohmann::json& j, const std::string& assignment);

/// Throws ConfigError naming the first missing path.
void requirePath(const std::filesystem::path& path, const std::string& what);

} // namespace xdrec
