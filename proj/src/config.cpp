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

#include <xdrec/config.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include <xdrec/checkpoint.h>
#include <xdrec/errors.h>

namespace xdrec {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void rejectUnknown(const json& j, const std::string& section,
                   const std::set<std::string>& known) {
  if (!j.is_object()) {
    throw ConfigError("config section '" + section + "' must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown config key '" +
                        (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    return;
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key +
                      "' has the wrong type");
  }
}

void readPath(const json& j, const char* key, fs::path& out,
              const std::string& section, const fs::path& baseDir) {
  std::string s;
  read(j, key, s, section);
  if (s.empty()) {
    return;
  }
  fs::path p(s);
  out = p.is_relative() && !baseDir.empty() ? baseDir / p : p;
}

json parseValue(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  return v.is_discarded() ? json(text) : v;
}

} // namespace

void applyOverride(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) {
      throw ConfigError("override '" + assignment + "' has an empty key");
    }
    if (!node->is_object()) {
      throw ConfigError("override '" + assignment +
                        "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = parseValue(assignment.substr(eq + 1));
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) {
      *node = json::object();
    }
    start = dot + 1;
  }
}

void requirePath(const fs::path& path, const std::string& what) {
  if (path.empty()) {
    throw ConfigError(what + " is not configured");
  }
  if (!fs::exists(path)) {
    throw ConfigError(what + " not found: " + path.string());
  }
}

fs::path RunConfig::cachePath() const {
  if (const char* env = std::getenv("XDREC_CACHE_DIR"); env && *env) {
    return fs::path(env);
  }
  return llm.cacheDir.empty() ? paths.workdir / "cache" : llm.cacheDir;
}

json RunConfig::toJson() const {
  json j;
  j["paths"] = {{"source_interactions", paths.sourceInteractions.string()},
                {"target_interactions", paths.targetInteractions.string()},
                {"metadata", paths.metadata.string()},
                {"workdir", paths.workdir.string()},
                {"taxonomy", paths.taxonomy.string()}};
  j["domains"] = {{"source", domains.source}, {"target", domains.target}};
  j["corpus"] = {{"min_item", corpus.minItem},
                 {"min_user", corpus.minUser},
                 {"iterate_to_fixed_point", corpus.iterateToFixedPoint}};
  j["llm"] = {{"provider", llm.provider},
              {"mock_dir", llm.mockDir.string()},
              {"base_url", llm.baseUrl},
              {"model", llm.model},
              {"api_key_env", llm.apiKeyEnv},
              {"timeout_seconds", llm.timeoutSeconds},
              {"max_retries", llm.maxRetries},
              {"requests_per_second", llm.requestsPerSecond},
              {"backoff_ms", llm.backoffMs},
              {"max_fallback_rate", llm.maxFallbackRate},
              {"workers", llm.workers},
              {"temperature", llm.temperature},
              {"max_tokens", llm.maxTokens},
              {"min_label_frequency", llm.minLabelFrequency},
              {"cache_dir", llm.cacheDir.string()}};
  j["encoder"] = {{"provider", encoder.provider},
                  {"base_url", encoder.baseUrl},
                  {"model", encoder.model},
                  {"api_key_env", encoder.apiKeyEnv},
                  {"allow_fallback", encoder.allowFallback}};
  j["hyper"] = hyperToJson(hyper);
  j["train"] = {
    {"batch_size", train.batchSize},
    {"epochs", train.epochs},
    {"lambda", train.lambda},
    {"general_lr", train.adam.generalLearningRate},
    {"semantic_lr", train.adam.semanticLearningRate},
    {"beta1", train.adam.beta1},
    {"beta2", train.adam.beta2},
    {"eps", train.adam.epsilon},
    {"seed", train.seed},
    {"negatives_per_positive", train.negativesPerPositive},
    {"patience", train.patience},
    {"validate", train.validate},
    {"validation_seed", train.validationSeed},
    {"cached_propagation_threshold", train.cachedPropagationThreshold},
    {"score_enriched", train.scoreEnriched}};
  j["eval"] = {{"seeds", seeds}, {"negatives", negatives}};
  j["ablation"] = ablationKey(train.ablation);
  return j;
}

RunConfig RunConfig::fromJson(const json& j, const fs::path& baseDir) {
  rejectUnknown(j, "", {"paths", "domains", "corpus", "llm", "encoder", "hyper",
                        "train", "eval", "ablation"});
  RunConfig c;
  if (auto it = j.find("paths"); it != j.end()) {
    const json& p = *it;
    rejectUnknown(p, "paths", {"source_interactions", "target_interactions",
                               "metadata", "workdir", "taxonomy"});
    readPath(p, "source_interactions", c.paths.sourceInteractions, "paths",
             baseDir);
    readPath(p, "target_interactions", c.paths.targetInteractions, "paths",
             baseDir);
    readPath(p, "metadata", c.paths.metadata, "paths", baseDir);
    readPath(p, "workdir", c.paths.workdir, "paths", baseDir);
    readPath(p, "taxonomy", c.paths.taxonomy, "paths", baseDir);
  }
  if (auto it = j.find("domains"); it != j.end()) {
    rejectUnknown(*it, "domains", {"source", "target"});
    read(*it, "source", c.domains.source, "domains");
    read(*it, "target", c.domains.target, "domains");
  }
  if (auto it = j.find("corpus"); it != j.end()) {
    rejectUnknown(*it, "corpus",
                  {"min_item", "min_user", "iterate_to_fixed_point"});
    read(*it, "min_item", c.corpus.minItem, "corpus");
    read(*it, "min_user", c.corpus.minUser, "corpus");
    read(*it, "iterate_to_fixed_point", c.corpus.iterateToFixedPoint, "corpus");
  }
  if (auto it = j.find("llm"); it != j.end()) {
    const json& l = *it;
    rejectUnknown(l, "llm",
                  {"provider", "mock_dir", "base_url", "model", "api_key_env",
                   "timeout_seconds", "max_retries", "requests_per_second",
                   "backoff_ms", "max_fallback_rate", "workers", "temperature",
                   "max_tokens", "min_label_frequency", "cache_dir"});
    read(l, "provider", c.llm.provider, "llm");
    readPath(l, "mock_dir", c.llm.mockDir, "llm", baseDir);
    read(l, "base_url", c.llm.baseUrl, "llm");
    read(l, "model", c.llm.model, "llm");
    read(l, "api_key_env", c.llm.apiKeyEnv, "llm");
    read(l, "timeout_seconds", c.llm.timeoutSeconds, "llm");
    read(l, "max_retries", c.llm.maxRetries, "llm");
    read(l, "requests_per_second", c.llm.requestsPerSecond, "llm");
    read(l, "backoff_ms", c.llm.backoffMs, "llm");
    read(l, "max_fallback_rate", c.llm.maxFallbackRate, "llm");
    read(l, "workers", c.llm.workers, "llm");
    read(l, "temperature", c.llm.temperature, "llm");
    read(l, "max_tokens", c.llm.maxTokens, "llm");
    read(l, "min_label_frequency", c.llm.minLabelFrequency, "llm");
    readPath(l, "cache_dir", c.llm.cacheDir, "llm", baseDir);
    if (c.llm.provider != "mock" && c.llm.provider != "http") {
      throw ConfigError("llm.provider must be 'mock' or 'http'");
    }
  }
  if (auto it = j.find("encoder"); it != j.end()) {
    const json& e = *it;
    rejectUnknown(e, "encoder", {"provider", "base_url", "model", "api_key_env",
                                 "allow_fallback"});
    read(e, "provider", c.encoder.provider, "encoder");
    read(e, "base_url", c.encoder.baseUrl, "encoder");
    read(e, "model", c.encoder.model, "encoder");
    read(e, "api_key_env", c.encoder.apiKeyEnv, "encoder");
    read(e, "allow_fallback", c.encoder.allowFallback, "encoder");
    if (c.encoder.provider != "hashed" && c.encoder.provider != "http") {
      throw ConfigError("encoder.provider must be 'hashed' or 'http'");
    }
  }
  if (auto it = j.find("hyper"); it != j.end()) {
    c.hyper = hyperFromJson(*it);
  }
  if (auto it = j.find("train"); it != j.end()) {
    const json& t = *it;
    rejectUnknown(t, "train",
                  {"batch_size", "epochs", "lambda", "general_lr",
                   "semantic_lr", "beta1", "beta2", "eps", "seed",
                   "negatives_per_positive", "patience", "validate",
                   "validation_seed", "cached_propagation_threshold",
                   "score_enriched"});
    read(t, "batch_size", c.train.batchSize, "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "lambda", c.train.lambda, "train");
    read(t, "general_lr", c.train.adam.generalLearningRate, "train");
    read(t, "semantic_lr", c.train.adam.semanticLearningRate, "train");
    read(t, "beta1", c.train.adam.beta1, "train");
    read(t, "beta2", c.train.adam.beta2, "train");
    read(t, "eps", c.train.adam.epsilon, "train");
    read(t, "seed", c.train.seed, "train");
    read(t, "negatives_per_positive", c.train.negativesPerPositive, "train");
    read(t, "patience", c.train.patience, "train");
    read(t, "validate", c.train.validate, "train");
    read(t, "validation_seed", c.train.validationSeed, "train");
    read(t, "cached_propagation_threshold", c.train.cachedPropagationThreshold,
         "train");
    read(t, "score_enriched", c.train.scoreEnriched, "train");
  }
  if (auto it = j.find("eval"); it != j.end()) {
    rejectUnknown(*it, "eval", {"seeds", "negatives"});
    read(*it, "seeds", c.seeds, "eval");
    read(*it, "negatives", c.negatives, "eval");
    if (c.seeds.empty()) {
      throw ConfigError("eval.seeds must list at least one seed");
    }
  }
  if (auto it = j.find("ablation"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw ConfigError("ablation must be a single variant name");
    }
    c.train.ablation = parseAblation(it->get<std::string>());
  }
  c.hyper.validate();
  c.train.validateConfig();
  return c;
}

RunConfig RunConfig::load(const fs::path& path,
                          const std::vector<std::string>& overrides) {
  requirePath(path, "config file");
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError(path.string() + " is not a JSON object");
  }
  for (const auto& o : overrides) {
    applyOverride(j, o);
  }
  return fromJson(j, path.parent_path());
}

} // namespace xdrec
