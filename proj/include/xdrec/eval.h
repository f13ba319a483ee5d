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
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include <xdrec/corpus.h>
#include <xdrec/model.h>

namespace xdrec {

enum class Split { Valid, Test };

std::string_view splitName(Split s);

/// Ground truth first, then `numNegatives` distinct target items drawn
/// uniformly from those outside the user's full target history. The draw
/// depends only on (seed, user). Throws ProtocolError when too few items are
/// eligible.
std::vector<ItemIndex> sampleCandidates(const UserSequenceBundle& bundle,
                                        ItemIndex groundTruth,
                                        const IndexMaps& maps,
                                        std::uint64_t seed,
                                        std::size_t numNegatives = 100);

struct RankMetrics {
  std::size_t rank = 0;
  double hit5 = 0, hit10 = 0, ndcg5 = 0, ndcg10 = 0;
};

/// 1 + number of other candidates scoring at least as high as the ground
/// truth (ties count against it).
std::size_t pessimisticRank(std::span<const double> scores,
                            std::size_t groundTruth);
RankMetrics rankMetrics(std::span<const double> scores,
                        std::size_t groundTruth);

/// Mean HR/NDCG at 5 and 10 for one run.
struct MetricSet {
  double hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0;

  static constexpr std::array<const char*, 4> kNames = {"HR@5", "HR@10",
                                                        "NDCG@5", "NDCG@10"};
  double get(std::size_t i) const;
  double& get(std::size_t i);
};

struct RunResult {
  std::uint64_t seed = 0;
  MetricSet metrics;
  std::size_t users = 0;
  /// Candidate list size of every evaluated case (all 101 by construction).
  std::size_t candidatesPerCase = 0;
};

struct EvalReport {
  std::string label;
  Split split = Split::Test;
  std::size_t negatives = 100;
  std::vector<RunResult> runs;
  MetricSet mean;
  MetricSet stddev;  // sample std; zero with one run

  nlohmann::json toJson() const;
  static EvalReport fromJson(const nlohmann::json& j);
};

/// Per-user scoring hook: (bundle, prediction point, candidates) -> scores.
using CandidateScorer = std::function<std::vector<double>(
  const UserSequenceBundle&, std::size_t, std::span<const ItemIndex>)>;

/// Evaluates a generic scorer on every user of the corpus.
RunResult evaluateScorer(const Corpus& corpus, Split split, std::uint64_t seed,
                         const CandidateScorer& scorer,
                         std::size_t numNegatives = 100);

/// Dropout-free model evaluation. Does not modify `state`.
RunResult evaluate(ModelState& state, const ModelInputs& inputs,
                   const Corpus& corpus, Split split, std::uint64_t seed,
                   std::size_t numNegatives = 100);

/// Sample mean and (n-1)-denominator standard deviation across runs.
EvalReport aggregateRuns(std::vector<RunResult> runs, std::string label = "",
                         Split split = Split::Test);

/// Fraction of training positives ranked in the top 10 among all target items
/// outside the user's history (no sampling).
double trainingHitRate(ModelState& state, const ModelInputs& inputs,
                       const Corpus& corpus, std::size_t k = 10);

/// Aligned table with columns N@5 N@10 HR@5 HR@10, one row per report, cells
/// "mean ± std" or "mean (n=1)".
std::string formatTable(const std::vector<EvalReport>& reports);

void writeReports(const std::filesystem::path& jsonPath,
                  const std::filesystem::path& tablePath,
                  const std::vector<EvalReport>& reports);

} // namespace xdrec
