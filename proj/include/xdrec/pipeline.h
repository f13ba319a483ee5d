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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <xdrec/config.h>
#include <xdrec/eval.h>
#include <xdrec/semantics.h>
#include <xdrec/synthetic.h>
#include <xdrec/taxonomy.h>
#include <xdrec/text_encoder.h>
#include <xdrec/trainer.h>

namespace xdrec {

Taxonomy loadTaxonomy(const RunConfig& config);
std::unique_ptr<TextEncoder> makeEncoder(const RunConfig& config);
std::unique_ptr<LlmClient> makeLlmClient(const RunConfig& config);

/// Writes the resolved config and the seed list into `dir`.
void archiveConfig(const RunConfig& config, const std::filesystem::path& dir);

/// Raw files -> corpus bundle under `<workdir>/corpus`. Returns the
/// statistics table.
std::string cmdPreprocess(const RunConfig& config);

/// Corpus bundle -> `<workdir>/profiles.jsonl`, filling the cache.
ExtractionStats cmdExtract(const RunConfig& config);

/// Trains one model (config.train.seed, config ablation) into
/// `<workdir>/train/<variant>/`.
TrainResult cmdTrain(const RunConfig& config);

/// Evaluates a checkpoint on the test split once per configured seed, each
/// seed drawing its own candidate sets. Writes `<workdir>/eval/<variant>/`.
EvalReport cmdEvaluate(const RunConfig& config,
                       std::optional<std::filesystem::path> checkpoint = {});

/// Trains and tests every variant once per seed; the seed fixes both the
/// initialization and the candidate sets, so variants are paired. Results of
/// finished variants are kept when a later one fails.
std::vector<EvalReport> cmdAblate(const RunConfig& config,
                                  const std::vector<Ablation>& variants =
                                    allAblations());

/// Aligned tables of every report found under the workdir.
std::string cmdReport(const RunConfig& config);

/// Planted corpus, matching mock-LLM responses and a ready-to-run config in
/// `dir`. Returns the config path.
std::filesystem::path cmdSynth(const std::filesystem::path& dir,
                               const SyntheticConfig& synth,
                               double malformedFraction = 0.0);

} // namespace xdrec
