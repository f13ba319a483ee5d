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

#include <xdrec/eval.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_set>

#include <xdrec/errors.h>

namespace xdrec {

using json = nlohmann::json;

std::string_view splitName(Split s) {
  return s == Split::Valid ? "valid" : "test";
}

namespace {

std::mt19937_64 userStream(std::uint64_t seed, UserIndex user) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(user),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(user) >> 32),
                    0x6576616cU};
  return std::mt19937_64(seq);
}

std::vector<ItemIndex> eligibleNegatives(const UserSequenceBundle& bundle,
                                         const IndexMaps& maps) {
  const std::unordered_set<ItemIndex> history(bundle.target.begin(),
                                              bundle.target.end());
  std::vector<ItemIndex> out;
  const ItemIndex begin = maps.targetOffset();
  const ItemIndex end = static_cast<ItemIndex>(maps.numUnifiedItems());
  for (ItemIndex m = begin; m < end; ++m) {
    if (!history.contains(m)) {
      out.push_back(m);
    }
  }
  return out;
}

} // namespace

std::vector<ItemIndex> sampleCandidates(const UserSequenceBundle& bundle,
                                        ItemIndex groundTruth,
                                        const IndexMaps& maps,
                                        std::uint64_t seed,
                                        std::size_t numNegatives) {
  std::vector<ItemIndex> pool = eligibleNegatives(bundle, maps);
  if (pool.size() < numNegatives) {
    throw ProtocolError("user " + maps.userId(bundle.user) + " has only " +
                        std::to_string(pool.size()) +
                        " eligible negatives; " +
                        std::to_string(numNegatives) + " are required");
  }
  auto rng = userStream(seed, bundle.user);
  // partial Fisher-Yates: the first numNegatives slots become the sample
  for (std::size_t i = 0; i < numNegatives; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  std::vector<ItemIndex> out;
  out.reserve(numNegatives + 1);
  out.push_back(groundTruth);
  out.insert(out.end(), pool.begin(),
             pool.begin() + static_cast<long>(numNegatives));
  return out;
}

std::size_t pessimisticRank(std::span<const double> scores,
                            std::size_t groundTruth) {
  const double g = scores[groundTruth];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != groundTruth && !(scores[i] < g)) {
      ++rank;
    }
  }
  return rank;
}

RankMetrics rankMetrics(std::span<const double> scores,
                        std::size_t groundTruth) {
  if (groundTruth >= scores.size()) {
    throw ShapeError("ground truth position out of range");
  }
  RankMetrics m;
  m.rank = pessimisticRank(scores, groundTruth);
  const double gain = 1.0 / std::log2(static_cast<double>(m.rank) + 1.0);
  if (m.rank <= 5) {
    m.hit5 = 1.0;
    m.ndcg5 = gain;
  }
  if (m.rank <= 10) {
    m.hit10 = 1.0;
    m.ndcg10 = gain;
  }
  return m;
}

double MetricSet::get(std::size_t i) const {
  return const_cast<MetricSet*>(this)->get(i);
}

double& MetricSet::get(std::size_t i) {
  switch (i) {
    case 0:
      return hr5;
    case 1:
      return hr10;
    case 2:
      return ndcg5;
    case 3:
      return ndcg10;
  }
  throw ShapeError("metric index out of range");
}

RunResult evaluateScorer(const Corpus& corpus, Split split, std::uint64_t seed,
                         const CandidateScorer& scorer,
                         std::size_t numNegatives) {
  RunResult r;
  r.seed = seed;
  r.candidatesPerCase = numNegatives + 1;
  for (const auto& b : corpus.users) {
    const std::size_t k =
      split == Split::Valid ? b.numTrainTarget() : b.numTrainTarget() + 1;
    const auto candidates =
      sampleCandidates(b, b.target[k], corpus.maps, seed, numNegatives);
    if (candidates.size() != numNegatives + 1) {
      throw ProtocolError("candidate list has the wrong size");
    }
    const auto scores = scorer(b, k, candidates);
    if (scores.size() != candidates.size()) {
      throw ProtocolError("scorer returned the wrong number of scores");
    }
    const RankMetrics m = rankMetrics(scores, 0);
    r.metrics.hr5 += m.hit5;
    r.metrics.hr10 += m.hit10;
    r.metrics.ndcg5 += m.ndcg5;
    r.metrics.ndcg10 += m.ndcg10;
    ++r.users;
  }
  if (r.users > 0) {
    const double n = static_cast<double>(r.users);
    for (std::size_t i = 0; i < 4; ++i) {
      r.metrics.get(i) /= n;
    }
  }
  return r;
}

RunResult evaluate(ModelState& state, const ModelInputs& inputs,
                   const Corpus& corpus, Split split, std::uint64_t seed,
                   std::size_t numNegatives) {
  Scorer scorer(state, inputs);
  return evaluateScorer(
    corpus, split, seed,
    [&](const UserSequenceBundle& b, std::size_t k,
        std::span<const ItemIndex> candidates) {
      const auto z = scorer.userVector(b, k);
      if (!z) {
        throw ShapeError("evaluation point outside the sequence window");
      }
      return scorer.scores(*z, candidates);
    },
    numNegatives);
}

EvalReport aggregateRuns(std::vector<RunResult> runs, std::string label,
                         Split split) {
  if (runs.empty()) {
    throw ConfigError("cannot aggregate zero runs");
  }
  EvalReport rep;
  rep.label = std::move(label);
  rep.split = split;
  rep.negatives = runs.front().candidatesPerCase - 1;
  rep.runs = std::move(runs);
  const double n = static_cast<double>(rep.runs.size());
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (const auto& r : rep.runs) {
      sum += r.metrics.get(i);
    }
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& r : rep.runs) {
      const double d = r.metrics.get(i) - mean;
      sq += d * d;
    }
    rep.mean.get(i) = mean;
    rep.stddev.get(i) = rep.runs.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  }
  return rep;
}

double trainingHitRate(ModelState& state, const ModelInputs& inputs,
                       const Corpus& corpus, std::size_t k) {
  Scorer scorer(state, inputs);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& b : corpus.users) {
    const std::size_t nTrain = b.numTrainTarget();
    if (nTrain < 2) {
      continue;
    }
    std::vector<std::size_t> points;
    for (std::size_t t = 1; t < nTrain; ++t) {
      points.push_back(t);
    }
    ad::Tape tape;
    const UserStates s = scorer.userVectors(b, nTrain - 1, points, tape);
    const auto negatives = eligibleNegatives(b, corpus.maps);
    for (std::size_t i = 0; i < s.kept.size(); ++i) {
      const RowVector z = s.z.value().row(static_cast<Index>(i));
      std::vector<ItemIndex> candidates{b.target[s.kept[i]]};
      candidates.insert(candidates.end(), negatives.begin(), negatives.end());
      const auto scores = scorer.scores(z, candidates);
      hits += pessimisticRank(scores, 0) <= k ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(hits) / static_cast<double>(total);
}

json EvalReport::toJson() const {
  json j;
  j["label"] = label;
  j["protocol"] = {{"split", splitName(split)},
                   {"negatives", negatives},
                   {"candidates", negatives + 1},
                   {"scheme", "leave-one-out"}};
  json seeds = json::array();
  json runsJ = json::array();
  for (const auto& r : runs) {
    seeds.push_back(r.seed);
    json m;
    for (std::size_t i = 0; i < 4; ++i) {
      m[MetricSet::kNames[i]] = r.metrics.get(i);
    }
    runsJ.push_back({{"seed", r.seed}, {"users", r.users}, {"metrics", m}});
  }
  j["protocol"]["seeds"] = seeds;
  j["runs"] = runsJ;
  json meanJ;
  json stdJ;
  for (std::size_t i = 0; i < 4; ++i) {
    meanJ[MetricSet::kNames[i]] = mean.get(i);
    stdJ[MetricSet::kNames[i]] = stddev.get(i);
  }
  j["mean"] = meanJ;
  j["std"] = stdJ;
  j["std_kind"] = "sample (n-1)";
  return j;
}

EvalReport EvalReport::fromJson(const json& j) {
  EvalReport rep;
  rep.label = j.at("label").get<std::string>();
  rep.split = j.at("protocol").at("split").get<std::string>() == "valid"
                ? Split::Valid
                : Split::Test;
  rep.negatives = j.at("protocol").at("negatives").get<std::size_t>();
  for (const auto& r : j.at("runs")) {
    RunResult rr;
    rr.seed = r.at("seed").get<std::uint64_t>();
    rr.users = r.at("users").get<std::size_t>();
    rr.candidatesPerCase = rep.negatives + 1;
    for (std::size_t i = 0; i < 4; ++i) {
      rr.metrics.get(i) = r.at("metrics").at(MetricSet::kNames[i]).get<double>();
    }
    rep.runs.push_back(rr);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    rep.mean.get(i) = j.at("mean").at(MetricSet::kNames[i]).get<double>();
    rep.stddev.get(i) = j.at("std").at(MetricSet::kNames[i]).get<double>();
  }
  return rep;
}

std::string formatTable(const std::vector<EvalReport>& reports) {
  // display order follows the customary N@5 N@10 HR@5 HR@10 layout
  constexpr std::array<std::size_t, 4> order = {2, 3, 0, 1};
  constexpr std::array<const char*, 4> headers = {"N@5", "N@10", "HR@5",
                                                  "HR@10"};
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model"});
  for (const char* h : headers) {
    rows.back().emplace_back(h);
  }
  for (const auto& r : reports) {
    std::vector<std::string> row{r.label.empty() ? "-" : r.label};
    for (std::size_t i : order) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << r.mean.get(i);
      if (r.runs.size() > 1) {
        cell << " ± " << std::setprecision(4) << r.stddev.get(i);
      } else {
        cell << " (n=1)";
      }
      row.push_back(cell.str());
    }
    rows.push_back(std::move(row));
  }
  // width in code points, so the ± sign counts as one column
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) {
      w += (c & 0xC0) != 0x80 ? 1 : 0;
    }
    return w;
  };
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], width(row[c]));
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      if (c > 0) {
        out << "  ";
      }
      out << cell;
      if (c + 1 < rows[r].size()) {
        out << std::string(widths[c] - width(cell), ' ');
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) {
        total += w;
      }
      out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

void writeReports(const std::filesystem::path& jsonPath,
                  const std::filesystem::path& tablePath,
                  const std::vector<EvalReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back(r.toJson());
  }
  std::ofstream j(jsonPath);
  std::ofstream t(tablePath);
  if (!j || !t) {
    throw IoError("cannot write report files next to " + jsonPath.string());
  }
  j << arr.dump(2) << '\n';
  t << formatTable(reports);
  if (!j || !t) {
    throw IoError("failed writing report files");
  }
}

} // namespace xdrec
