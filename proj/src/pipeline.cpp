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

#include <xdrec/pipeline.h>

#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include <xdrec/checkpoint.h>
#include <xdrec/errors.h>
#include <xdrec/llm_client.h>

namespace xdrec {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

json readJson(const fs::path& path) {
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw FormatError(path.string() + " is not valid JSON");
  }
  return j;
}

struct Prepared {
  Corpus corpus;
  Taxonomy taxonomy;
  std::vector<ItemSemanticProfile> profiles;
};

Prepared prepare(const RunConfig& config) {
  requirePath(config.corpusDir(), "corpus bundle (run preprocess first)");
  requirePath(config.profilesPath(), "semantic profiles (run extract first)");
  Prepared p;
  p.corpus = loadCorpus(config.corpusDir());
  p.taxonomy = loadTaxonomy(config);
  p.profiles = readProfiles(config.profilesPath(), p.taxonomy, p.corpus.maps);
  return p;
}

ModelInputs inputsFor(const RunConfig& config, const Prepared& p,
                      Ablation ablation) {
  auto encoder = makeEncoder(config);
  return ModelInputs::build(p.corpus, p.profiles, p.taxonomy, *encoder,
                            ablation, config.hyper.maxSeqLen);
}

} // namespace

Taxonomy loadTaxonomy(const RunConfig& config) {
  if (config.paths.taxonomy.empty()) {
    return defaultTaxonomy();
  }
  requirePath(config.paths.taxonomy, "taxonomy file");
  return Taxonomy::load(config.paths.taxonomy);
}

std::unique_ptr<TextEncoder> makeEncoder(const RunConfig& config) {
  if (config.encoder.provider == "http") {
    return std::make_unique<FallbackTextEncoder>(
      std::make_unique<HttpTextEncoder>(config.encoder.baseUrl,
                                        config.encoder.model,
                                        config.encoder.apiKeyEnv,
                                        config.hyper.textDim),
      config.encoder.allowFallback);
  }
  return std::make_unique<HashedTrigramEncoder>(config.hyper.textDim);
}

std::unique_ptr<LlmClient> makeLlmClient(const RunConfig& config) {
  if (config.llm.provider == "http") {
    if (config.llm.baseUrl.empty()) {
      throw ConfigError("llm.base_url is required for the http provider");
    }
    return std::make_unique<HttpLlmClient>(
      config.llm.baseUrl, config.llm.model, config.llm.apiKeyEnv,
      std::chrono::seconds(config.llm.timeoutSeconds));
  }
  requirePath(config.llm.mockDir, "mock LLM directory");
  return std::make_unique<MockLlmClient>(config.llm.mockDir);
}

void archiveConfig(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  writeText(dir / "config.json", config.toJson().dump(2) + "\n");
  std::ostringstream seeds;
  seeds << "train_seed\t" << config.train.seed << '\n';
  seeds << "eval_seeds";
  for (auto s : config.seeds) {
    seeds << '\t' << s;
  }
  seeds << '\n';
  writeText(dir / "seeds.txt", seeds.str());
}

std::string cmdPreprocess(const RunConfig& config) {
  requirePath(config.paths.sourceInteractions, "source interactions");
  requirePath(config.paths.targetInteractions, "target interactions");
  if (config.paths.workdir.empty()) {
    throw ConfigError("paths.workdir is not configured");
  }
  const auto src = parseInteractions(config.paths.sourceInteractions,
                                     Domain::Source);
  const auto tgt = parseInteractions(config.paths.targetInteractions,
                                     Domain::Target);
  ItemMetadataStore metadata;
  if (!config.paths.metadata.empty()) {
    requirePath(config.paths.metadata, "item metadata");
    metadata = parseMetadata(config.paths.metadata);
  }
  PreprocessStats stats;
  const Corpus corpus = buildCorpus(src.records, tgt.records, metadata,
                                    config.corpus, config.domains, &stats);
  spdlog::info("preprocess: {} duplicates removed, {} items and {} users "
               "dropped in {} pass(es)",
               stats.duplicatesRemoved, stats.itemsDropped, stats.usersDropped,
               stats.passes);
  saveCorpus(corpus, config.corpusDir());
  archiveConfig(config, config.corpusDir());
  return corpusStatsTable(corpus);
}

ExtractionStats cmdExtract(const RunConfig& config) {
  requirePath(config.corpusDir(), "corpus bundle (run preprocess first)");
  const Corpus corpus = loadCorpus(config.corpusDir());
  const Taxonomy taxonomy = loadTaxonomy(config);
  auto client = makeLlmClient(config);
  SemanticCache cache(config.cachePath());
  ExtractionConfig ec;
  ec.maxRetries = config.llm.maxRetries;
  ec.generation.temperature = config.llm.temperature;
  ec.generation.maxTokens = config.llm.maxTokens;
  ec.requestsPerSecond = config.llm.requestsPerSecond;
  ec.backoff = std::chrono::milliseconds(config.llm.backoffMs);
  ec.maxFallbackRate = config.llm.maxFallbackRate;
  ec.workers = config.llm.workers;
  ec.domains = config.domains;
  SemanticExtractor extractor(*client, taxonomy, &cache, ec);
  auto profiles = extractor.extractAll(corpus);
  profiles = filterOutliers(std::move(profiles), taxonomy,
                            config.llm.minLabelFrequency);
  fs::create_directories(config.paths.workdir);
  writeProfiles(config.profilesPath(), profiles, taxonomy);
  archiveConfig(config, config.paths.workdir);
  return extractor.stats();
}

TrainResult cmdTrain(const RunConfig& config) {
  const Prepared p = prepare(config);
  const ModelInputs inputs = inputsFor(config, p, config.train.ablation);
  const fs::path dir = config.trainDir();
  fs::create_directories(dir);
  archiveConfig(config, dir);
  TrainResult result =
    train(p.corpus, inputs, config.hyper, p.taxonomy.numSubcategories(),
          config.train, [](const EpochLog& e) {
            spdlog::info("epoch {:>3}  L={:.5f}  L_rec={:.5f}  L_c1={:.4f}  "
                         "L_c2={:.4f}{}",
                         e.epoch, e.total, e.rec, e.c1, e.c2,
                         e.valid ? fmt::format("  valid N@10={:.4f}",
                                               e.valid->ndcg10)
                                 : std::string());
            return true;
          });
  writeTrainingLog(dir / "train_log.jsonl", result.log);
  saveCheckpoint(config.checkpointPath(), result.state, p.corpus.maps);
  json summary = {{"best_epoch", result.bestEpoch},
                  {"epochs_run", result.log.size()},
                  {"variant", ablationName(config.train.ablation)}};
  if (result.bestValid) {
    summary["valid"] = {{"HR@5", result.bestValid->hr5},
                        {"HR@10", result.bestValid->hr10},
                        {"NDCG@5", result.bestValid->ndcg5},
                        {"NDCG@10", result.bestValid->ndcg10}};
  }
  writeText(dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

EvalReport cmdEvaluate(const RunConfig& config,
                       std::optional<fs::path> checkpoint) {
  const fs::path ckpt = checkpoint.value_or(config.checkpointPath());
  requirePath(ckpt, "checkpoint");
  const Prepared p = prepare(config);
  ModelState state = loadCheckpoint(ckpt, p.corpus.maps);
  const ModelInputs inputs = inputsFor(config, p, state.ablation);
  std::vector<RunResult> runs;
  for (auto seed : config.seeds) {
    runs.push_back(
      evaluate(state, inputs, p.corpus, Split::Test, seed, config.negatives));
  }
  EvalReport report =
    aggregateRuns(std::move(runs), ablationName(state.ablation), Split::Test);
  const fs::path dir = config.paths.workdir / "eval" / ablationKey(state.ablation);
  fs::create_directories(dir);
  archiveConfig(config, dir);
  writeReports(dir / "report.json", dir / "report.txt", {report});
  return report;
}

std::vector<EvalReport> cmdAblate(const RunConfig& config,
                                  const std::vector<Ablation>& variants) {
  const Prepared p = prepare(config);
  const fs::path root = config.paths.workdir / "ablate";
  fs::create_directories(root);
  archiveConfig(config, root);
  std::vector<EvalReport> reports;
  std::vector<std::string> failures;
  for (Ablation v : variants) {
    const fs::path dir = root / ablationKey(v);
    fs::create_directories(dir);
    try {
      const ModelInputs inputs = inputsFor(config, p, v);
      std::vector<RunResult> runs;
      for (auto seed : config.seeds) {
        TrainConfig tc = config.train;
        tc.seed = seed;
        tc.ablation = v;
        TrainResult r = train(p.corpus, inputs, config.hyper,
                              p.taxonomy.numSubcategories(), tc);
        writeTrainingLog(dir / ("train_log_seed" + std::to_string(seed) +
                                ".jsonl"),
                         r.log);
        runs.push_back(evaluate(r.state, inputs, p.corpus, Split::Test, seed,
                                config.negatives));
        spdlog::info("{} seed {}: test N@10={:.4f}", ablationName(v), seed,
                     runs.back().metrics.ndcg10);
      }
      reports.push_back(aggregateRuns(std::move(runs), ablationName(v)));
      writeReports(dir / "report.json", dir / "report.txt", {reports.back()});
    } catch (const std::exception& e) {
      spdlog::error("variant {} failed: {}", ablationName(v), e.what());
      failures.push_back(ablationName(v) + ": " + e.what());
    }
    if (!reports.empty()) {
      writeReports(root / "report.json", root / "table.txt", reports);
    }
  }
  if (!failures.empty()) {
    std::string msg = "ablation finished with failures:";
    for (const auto& f : failures) {
      msg += "\n  " + f;
    }
    throw Error(msg);
  }
  return reports;
}

std::string cmdReport(const RunConfig& config) {
  std::ostringstream out;
  const fs::path evalDir = config.paths.workdir / "eval";
  std::vector<EvalReport> evals;
  if (fs::is_directory(evalDir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(evalDir)) {
      if (fs::exists(e.path() / "report.json")) {
        files.push_back(e.path() / "report.json");
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      for (const auto& r : readJson(f)) {
        evals.push_back(EvalReport::fromJson(r));
      }
    }
  }
  if (!evals.empty()) {
    out << "Test results (leave-one-out, 100 sampled negatives)\n"
        << formatTable(evals) << '\n';
  }
  const fs::path ablate = config.paths.workdir / "ablate" / "report.json";
  if (fs::exists(ablate)) {
    std::vector<EvalReport> rows;
    for (const auto& r : readJson(ablate)) {
      rows.push_back(EvalReport::fromJson(r));
    }
    out << "Ablation study\n" << formatTable(rows) << '\n';
  }
  if (evals.empty() && !fs::exists(ablate)) {
    throw ConfigError("no reports found under " + config.paths.workdir.string());
  }
  writeText(config.paths.workdir / "report.txt", out.str());
  return out.str();
}

fs::path cmdSynth(const fs::path& dir, const SyntheticConfig& synth,
                  double malformedFraction) {
  const SyntheticCorpus corpus = generateSynthetic(synth);
  writeSyntheticFiles(corpus, dir / "data");
  const Taxonomy taxonomy = defaultTaxonomy();
  writeMockResponses(corpus, taxonomy, dir / "mock", malformedFraction,
                     synth.seed + 1);

  RunConfig c;
  c.paths.sourceInteractions = "data/source.tsv";
  c.paths.targetInteractions = "data/target.tsv";
  c.paths.metadata = "data/metadata.jsonl";
  c.paths.workdir = "work";
  c.domains = synth.domains;
  // planted items are too rare for the default popularity floor
  c.corpus.minItem = 1;
  c.llm.provider = "mock";
  c.llm.mockDir = "mock";
  c.llm.backoffMs = 0;
  c.train.validate =
    synth.itemsPerDomain >= synth.maxTargetLength + c.negatives;
  json j = c.toJson();
  j["paths"].erase("taxonomy");
  j["llm"].erase("cache_dir");
  const fs::path path = dir / "config.json";
  writeText(path, j.dump(2) + "\n");
  return path;
}

} // namespace xdrec
