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

#include <xdrec/trainer.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include <xdrec/errors.h>

namespace xdrec {

using json = nlohmann::json;

void TrainConfig::validateConfig() const {
  if (batchSize < 1) {
    throw ConfigError("batch size must be at least 1");
  }
  if (epochs < 0) {
    throw ConfigError("epochs must be nonnegative");
  }
  if (!(lambda >= 0.0)) {
    throw ConfigError("lambda must be nonnegative");
  }
  // zero is accepted so that a run can be checked for a no-op update
  if (!(adam.generalLearningRate >= 0.0) || !(adam.semanticLearningRate >= 0.0)) {
    throw ConfigError("learning rates must be nonnegative");
  }
  if (negativesPerPositive < 1) {
    throw ConfigError("at least one negative per positive is required");
  }
  if (patience < 1) {
    throw ConfigError("patience must be at least 1");
  }
}

json EpochLog::toJson() const {
  json j = {{"epoch", epoch},
            {"L_rec", rec},
            {"L_c1", c1},
            {"L_c2", c2},
            {"L", total},
            {"contrastive_in_loss", regularized},
            {"alpha", alpha},
            {"beta", beta},
            {"gamma", gamma},
            {"wall_seconds", seconds}};
  if (valid) {
    j["valid"] = {{"HR@5", valid->hr5},
                  {"HR@10", valid->hr10},
                  {"NDCG@5", valid->ndcg5},
                  {"NDCG@10", valid->ndcg10}};
  } else {
    j["valid"] = nullptr;
  }
  return j;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

ItemIndex sampleNegative(const std::unordered_set<ItemIndex>& history,
                         ItemIndex begin, ItemIndex end, std::mt19937_64& rng) {
  std::uniform_int_distribution<ItemIndex> pick(begin, end - 1);
  // the history is a small fraction of the catalog, so rejection is cheap
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const ItemIndex m = pick(rng);
    if (!history.contains(m)) {
      return m;
    }
  }
  throw ProtocolError("no negative item available outside the user history");
}

std::vector<Matrix> snapshot(ModelState& state) {
  std::vector<Matrix> out;
  for (Parameter* p : state.parameters()) {
    out.push_back(p->value);
  }
  return out;
}

void restore(ModelState& state, const std::vector<Matrix>& values) {
  auto params = state.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = values[i];
  }
}

} // namespace

BatchLoss batchLoss(ad::Tape& tape, ModelState& state, const ModelInputs& inputs,
                    std::span<const UserSequenceBundle* const> users,
                    const TrainConfig& config, std::mt19937_64& rng,
                    std::mt19937_64* dropoutRng, const Propagated* cached) {
  Propagated prop;
  if (cached) {
    prop = constantPropagation(tape, *cached);
    // semantic views stay live so the contrastive terms keep their gradients
    prop.views = itemViews(tape, state.tables, inputs.semantics);
  } else {
    prop = propagate(tape, state, inputs);
  }
  ad::Var table = scoringTable(tape, state, prop);
  const ItemIndex begin = inputs.maps.targetOffset();
  const auto end = static_cast<ItemIndex>(inputs.maps.numUnifiedItems());
  const std::size_t negs = config.negativesPerPositive;

  std::vector<ad::Var> posParts;
  std::vector<ad::Var> negParts;
  BatchLoss out;
  for (const UserSequenceBundle* b : users) {
    const std::size_t nTrain = b->numTrainTarget();
    if (nTrain < 2) {
      continue;
    }
    std::vector<std::size_t> points(nTrain - 1);
    std::iota(points.begin(), points.end(), std::size_t{1});
    UserStates us =
      userStates(tape, state, prop, *b, nTrain - 1, points, dropoutRng);
    if (us.kept.empty()) {
      continue;
    }
    const std::unordered_set<ItemIndex> history(b->target.begin(),
                                                b->target.end());
    std::vector<Index> zRows;
    std::vector<Index> pos;
    std::vector<Index> neg;
    for (std::size_t i = 0; i < us.kept.size(); ++i) {
      for (std::size_t j = 0; j < negs; ++j) {
        zRows.push_back(static_cast<Index>(i));
        pos.push_back(b->target[us.kept[i]]);
        neg.push_back(sampleNegative(history, begin, end, rng));
      }
    }
    ad::Var z = negs == 1 ? us.z : ad::gatherRows(us.z, zRows);
    posParts.push_back(ad::rowDot(z, ad::gatherRows(table, pos)));
    negParts.push_back(ad::rowDot(z, ad::gatherRows(table, neg)));
    out.pairs += pos.size();
  }
  if (out.pairs == 0) {
    return out;
  }
  ad::Var rec = bprLoss(ad::concatRows(posParts), ad::concatRows(negParts));
  out.rec = rec.scalar();
  out.total = rec;

  if (prop.views.agnostic.valid()) {
    ContrastiveTerms terms = contrastiveRegularizer(
      tape, state.tables, prop.views, inputs.domainItems,
      state.hyper.temperature, state.hyper.contrastiveCatalogLimit);
    out.c1 = terms.idVsAgnostic.scalar();
    ad::Var sum = terms.idVsAgnostic;
    if (terms.innerVsAgnostic.valid()) {
      out.c2 = terms.innerVsAgnostic.scalar();
      sum = ad::add(sum, terms.innerVsAgnostic);
    }
    if (regularizersActive(state.ablation) && config.lambda != 0.0) {
      out.total = ad::add(rec, ad::scale(sum, config.lambda));
    }
  }
  return out;
}

TrainResult train(const Corpus& corpus, const ModelInputs& inputs,
                  const HyperParams& hyper, std::size_t numSubcategories,
                  const TrainConfig& config, const EpochCallback& onEpoch) {
  config.validateConfig();
  TrainResult result;
  result.state = ModelState::init(hyper, config.ablation, corpus.maps,
                                  numSubcategories, config.seed);
  ModelState& state = result.state;
  state.scoreEnriched = config.scoreEnriched;
  Adam adam(config.adam, state.parameters());

  auto orderRng = stream(config.seed, 1);
  auto negativeRng = stream(config.seed, 2);
  auto dropoutRng = stream(config.seed, 3);

  std::vector<const UserSequenceBundle*> order;
  for (const auto& b : corpus.users) {
    order.push_back(&b);
  }
  const std::size_t nodes = inputs.maps.numUnifiedItems() +
                            static_cast<std::size_t>(inputs.mixedGraph.numNodes());
  const bool cachedMode = nodes > config.cachedPropagationThreshold;

  std::vector<Matrix> best;
  double bestScore = -1.0;
  int sinceBest = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), orderRng);

    ad::Tape cacheTape;
    Propagated cached;
    if (cachedMode) {
      cached = propagate(cacheTape, state, inputs);
    }

    EpochLog log;
    log.epoch = epoch;
    log.regularized = regularizersActive(state.ablation) && config.lambda != 0.0;
    double recSum = 0.0;
    std::size_t pairSum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batchSize) {
      const std::size_t n = std::min(config.batchSize, order.size() - start);
      std::span<const UserSequenceBundle* const> batch(order.data() + start, n);
      adam.zeroGrad();
      ad::Tape tape;
      BatchLoss loss =
        batchLoss(tape, state, inputs, batch, config, negativeRng, &dropoutRng,
                  cachedMode ? &cached : nullptr);
      if (loss.pairs == 0) {
        continue;
      }
      const double total = loss.total.scalar();
      if (!std::isfinite(total) || !std::isfinite(loss.c1) ||
          !std::isfinite(loss.c2)) {
        throw DivergenceError(
          "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
          std::to_string(batches + 1) + " (L_rec=" + std::to_string(loss.rec) +
          ", L_c1=" + std::to_string(loss.c1) +
          ", L_c2=" + std::to_string(loss.c2) + ")");
      }
      tape.backward(loss.total);
      adam.step();
      recSum += loss.rec * static_cast<double>(loss.pairs);
      pairSum += loss.pairs;
      log.c1 += loss.c1;
      log.c2 += loss.c2;
      ++batches;
    }
    if (batches > 0) {
      log.rec = recSum / static_cast<double>(pairSum);
      log.c1 /= static_cast<double>(batches);
      log.c2 /= static_cast<double>(batches);
    }
    log.total = log.regularized ? totalLoss(log.rec, log.c1, log.c2, config.lambda)
                                : log.rec;
    log.alpha = state.fusion.alpha.value(0, 0);
    log.beta = state.fusion.beta.value(0, 0);
    log.gamma = state.fusion.gamma.value(0, 0);
    state.epoch = epoch;

    bool stop = false;
    if (config.validate) {
      const RunResult r = evaluate(state, inputs, corpus, Split::Valid,
                                   config.validationSeed);
      log.valid = r.metrics;
      if (r.metrics.ndcg10 > bestScore) {
        bestScore = r.metrics.ndcg10;
        best = snapshot(state);
        result.bestEpoch = epoch;
        result.bestValid = r.metrics;
        sinceBest = 0;
      } else if (++sinceBest >= config.patience) {
        stop = true;
      }
    }
    log.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - started)
                    .count();
    spdlog::debug("epoch {} L={:.5f} L_rec={:.5f} L_c1={:.4f} L_c2={:.4f}",
                  epoch, log.total, log.rec, log.c1, log.c2);
    result.log.push_back(log);
    if (onEpoch && !onEpoch(log)) {
      stop = true;
    }
    if (stop) {
      break;
    }
  }

  state.optimizer = ModelState::OptimizerState{adam.steps(), adam.firstMoments(),
                                               adam.secondMoments()};
  if (config.validate && !best.empty()) {
    restore(state, best);
    state.epoch = result.bestEpoch;
  } else {
    result.bestEpoch = state.epoch;
  }
  return result;
}

void writeTrainingLog(const std::filesystem::path& path,
                      const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write training log " + path.string());
  }
  for (const auto& e : log) {
    out << e.toJson().dump() << '\n';
  }
}

} // namespace xdrec
