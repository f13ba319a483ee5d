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
#include <functional>
#include <limits>
#include <vector>

#include <json.hpp>

#include <xdrec/eval.h>
#include <xdrec/model.h>
#include <xdrec/optimizer.h>

namespace xdrec {

struct TrainConfig {
  std::size_t batchSize = 256;
  int epochs = 200;
  double lambda = 0.1;
  AdamConfig adam;
  std::uint64_t seed = 42;
  std::size_t negativesPerPositive = 1;
  Ablation ablation = Ablation::None;
  /// Epochs without a validation NDCG@10 improvement before stopping.
  int patience = 10;
  /// Per-epoch validation; when off, the final parameters are returned.
  bool validate = true;
  /// Seed of the validation candidate draw.
  std::uint64_t validationSeed = 0;
  /// Above this many graph nodes, propagation runs once per epoch and is
  /// treated as constant within it.
  std::size_t cachedPropagationThreshold = std::numeric_limits<std::size_t>::max();
  /// Score with graph-enriched target embeddings instead of e^ID.
  bool scoreEnriched = false;

  void validateConfig() const;
};

struct EpochLog {
  int epoch = 0;
  double rec = 0, c1 = 0, c2 = 0, total = 0;
  /// Contrastive terms count towards `total` only when this is set.
  bool regularized = true;
  std::optional<MetricSet> valid;
  double seconds = 0;
  /// Fusion scalars after the epoch.
  double alpha = 0, beta = 0, gamma = 0;

  nlohmann::json toJson() const;
};

struct TrainResult {
  ModelState state;
  std::vector<EpochLog> log;
  int bestEpoch = 0;
  std::optional<MetricSet> bestValid;
};

/// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochLog&)>;

TrainResult train(const Corpus& corpus, const ModelInputs& inputs,
                  const HyperParams& hyper, std::size_t numSubcategories,
                  const TrainConfig& config, const EpochCallback& onEpoch = {});

struct BatchLoss {
  ad::Var total;
  double rec = 0, c1 = 0, c2 = 0;
  std::size_t pairs = 0;
};

/// Loss of one batch of users on `tape`; negatives are drawn from `rng` and
/// dropout is applied when `dropoutRng` is non-null.
BatchLoss batchLoss(ad::Tape& tape, ModelState& state, const ModelInputs& inputs,
                    std::span<const UserSequenceBundle* const> users,
                    const TrainConfig& config, std::mt19937_64& rng,
                    std::mt19937_64* dropoutRng,
                    const Propagated* cached = nullptr);

void writeTrainingLog(const std::filesystem::path& path,
                      const std::vector<EpochLog>& log);

} // namespace xdrec
