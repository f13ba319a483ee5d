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

// Command-line driver: preprocess -> extract -> train -> evaluate, plus
// ablation sweeps, report tables and a synthetic demo corpus.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <xdrec/errors.h>
#include <xdrec/pipeline.h>

using namespace xdrec;

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain sequential recommendation with LLM-extracted "
               "item semantics"};
  app.require_subcommand(1);

  std::string configPath;
  std::vector<std::string> overrides;
  bool verbose = false;
  auto addCommon = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", configPath, "run configuration (JSON)")
      ->required();
    cmd->add_option("--set", overrides,
                    "override a config key, e.g. --set train.epochs=20")
      ->take_all();
  };
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* preprocess = app.add_subcommand(
    "preprocess", "parse raw interactions and build the corpus bundle");
  addCommon(preprocess);

  auto* extract = app.add_subcommand(
    "extract", "query the LLM for item semantic profiles");
  addCommon(extract);

  auto* trainCmd = app.add_subcommand("train", "train one model");
  addCommon(trainCmd);

  std::optional<std::string> checkpoint;
  auto* evaluateCmd = app.add_subcommand(
    "evaluate", "test a checkpoint once per configured seed");
  addCommon(evaluateCmd);
  evaluateCmd->add_option("--checkpoint", checkpoint,
                          "checkpoint to evaluate (default: the trained one)");

  std::vector<std::string> variantKeys;
  auto* ablate = app.add_subcommand(
    "ablate", "train and test every variant across the configured seeds");
  addCommon(ablate);
  ablate->add_option("--variants", variantKeys,
                     "subset of variants (full, no_inn_sem, no_dom_agn_sem, "
                     "no_inn_dom_agn_sem, simp_graph, no_cd_behav, "
                     "avg_fusion, no_con_reg)")
    ->delimiter(',');

  auto* report = app.add_subcommand("report", "print all result tables");
  addCommon(report);

  std::string synthDir;
  SyntheticConfig synth;
  double malformed = 0.0;
  auto* synthCmd = app.add_subcommand(
    "synth", "write a planted two-domain corpus with mock LLM responses");
  synthCmd->add_option("dir", synthDir, "output directory")->required();
  synthCmd->add_option("--users", synth.users)->capture_default_str();
  synthCmd->add_option("--items", synth.itemsPerDomain, "items per domain")
    ->capture_default_str();
  synthCmd->add_option("--categories", synth.latentCategories)
    ->capture_default_str();
  synthCmd->add_option("--min-length", synth.minTargetLength)
    ->capture_default_str();
  synthCmd->add_option("--max-length", synth.maxTargetLength)
    ->capture_default_str();
  synthCmd->add_option("--preference", synth.preference)->capture_default_str();
  synthCmd->add_option("--seed", synth.seed)->capture_default_str();
  synthCmd->add_option("--malformed", malformed,
                       "fraction of items whose first LLM answer is invalid")
    ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*synthCmd) {
      synth.minSourceLength = synth.minTargetLength;
      synth.maxSourceLength = synth.maxTargetLength;
      const auto path = cmdSynth(synthDir, synth, malformed);
      std::cout << "wrote " << path.string() << '\n';
      return 0;
    }
    const RunConfig config = RunConfig::load(configPath, overrides);
    if (*preprocess) {
      std::cout << cmdPreprocess(config);
    } else if (*extract) {
      const ExtractionStats s = cmdExtract(config);
      std::cout << "items " << s.items << ", LLM calls " << s.calls
                << ", cache hits " << s.cacheHits << ", invalid responses "
                << s.invalidResponses << ", fallbacks " << s.fallbacks << " ("
                << s.fallbackRate() * 100.0 << "%)\n";
    } else if (*trainCmd) {
      const TrainResult r = cmdTrain(config);
      std::cout << "best epoch " << r.bestEpoch << "; checkpoint "
                << config.checkpointPath().string() << '\n';
    } else if (*evaluateCmd) {
      std::optional<std::filesystem::path> ckpt;
      if (checkpoint) {
        ckpt = *checkpoint;
      }
      const EvalReport r = cmdEvaluate(config, ckpt);
      std::cout << splitName(r.split) << " split, " << r.negatives
                << " negatives\n"
                << formatTable({r});
    } else if (*ablate) {
      std::vector<Ablation> variants;
      for (const auto& k : variantKeys) {
        variants.push_back(parseAblation(k));
      }
      const auto reports =
        cmdAblate(config, variants.empty() ? allAblations() : variants);
      std::cout << formatTable(reports);
    } else if (*report) {
      std::cout << cmdReport(config);
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
