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

#include <xdrec/synthetic.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>

#include <json.hpp>

#include <xdrec/errors.h>
#include <xdrec/llm_client.h>
#include <xdrec/semantics.h>

namespace xdrec {

using json = nlohmann::json;

namespace {

const std::vector<std::vector<std::string>>& wordBanks() {
  static const std::vector<std::vector<std::string>> banks = {
    {"detective", "murder", "clues", "investigation", "shadowy", "suspect",
     "alibi", "noir"},
    {"romance", "love", "heartfelt", "wedding", "tender", "longing",
     "courtship", "devotion"},
    {"starship", "galaxy", "robots", "futuristic", "alien", "quantum",
     "cyborg", "orbit"},
    {"kingdom", "battle", "ancient", "empire", "sword", "dynasty", "siege",
     "legion"},
  };
  return banks;
}

std::string padded(const char* prefix, std::size_t i, std::size_t total) {
  int width = 1;
  for (std::size_t n = total; n >= 10; n /= 10) {
    ++width;
  }
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width)) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return prefix + digits;
}

std::string lowerCase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::size_t> drawSequence(
  std::size_t length, std::size_t latent,
  const std::vector<std::vector<std::size_t>>& byLatent, std::size_t numItems,
  double preference, std::mt19937_64& rng) {
  std::vector<char> used(numItems, 0);
  std::vector<std::size_t> out;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto pickUnused = [&](const std::vector<std::size_t>& pool)
    -> std::optional<std::size_t> {
    std::vector<std::size_t> free;
    for (std::size_t m : pool) {
      if (!used[m]) {
        free.push_back(m);
      }
    }
    if (free.empty()) {
      return std::nullopt;
    }
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    return free[pick(rng)];
  };
  std::vector<std::size_t> all(numItems);
  for (std::size_t m = 0; m < numItems; ++m) {
    all[m] = m;
  }
  while (out.size() < length) {
    std::optional<std::size_t> m;
    if (coin(rng) < preference) {
      m = pickUnused(byLatent[latent]);
    }
    if (!m) {
      m = pickUnused(all);
    }
    if (!m) {
      // catalog exhausted: allow repeats
      std::uniform_int_distribution<std::size_t> pick(0, numItems - 1);
      m = pick(rng);
    }
    used[*m] = 1;
    out.push_back(*m);
  }
  return out;
}

} // namespace

SyntheticCorpus generateSynthetic(const SyntheticConfig& config) {
  if (config.users == 0 || config.itemsPerDomain == 0 ||
      config.latentCategories == 0) {
    throw ConfigError("synthetic corpus needs users, items and categories");
  }
  if (config.minSourceLength > config.maxSourceLength ||
      config.minTargetLength > config.maxTargetLength ||
      config.minTargetLength < 3) {
    throw ConfigError("invalid synthetic sequence length range");
  }
  SyntheticCorpus out;
  out.config = config;
  std::mt19937_64 rng(config.seed);
  const std::size_t C = config.latentCategories;
  const std::size_t N = config.itemsPerDomain;
  const auto& banks = wordBanks();

  std::array<std::vector<std::string>, 2> ids;
  std::vector<std::vector<std::size_t>> byLatent(C);
  for (std::size_t j = 0; j < N; ++j) {
    byLatent[j % C].push_back(j);
  }
  for (Domain d : {Domain::Source, Domain::Target}) {
    const auto di = static_cast<std::size_t>(d);
    const std::string& name = di == 0 ? config.domains.source
                                      : config.domains.target;
    for (std::size_t j = 0; j < N; ++j) {
      const std::string id = padded(di == 0 ? "S" : "T", j, N);
      ids[di].push_back(id);
      const std::size_t latent = j % C;
      out.itemLatent[id] = latent;
      const auto& bank = banks[latent % banks.size()];
      ItemMetadata meta;
      meta.title = "The " + bank[j % bank.size()] + " " +
                   bank[(j / C + 1) % bank.size()] + " " + std::to_string(j);
      meta.categoryPath = name;
      meta.brand = "Studio " + std::to_string(j % 7);
      meta.description = "A " + lowerCase(name) + " item about " +
                         bank[(j + 2) % bank.size()] + ".";
      out.metadata[id] = meta;
    }
  }

  std::uniform_int_distribution<std::int64_t> when(0, 1'000'000);
  for (std::size_t u = 0; u < config.users; ++u) {
    const std::string uid = padded("U", u, config.users);
    const std::size_t latent = u % C;
    out.userLatent[uid] = latent;
    for (Domain d : {Domain::Source, Domain::Target}) {
      const auto di = static_cast<std::size_t>(d);
      const std::size_t lo =
        di == 0 ? config.minSourceLength : config.minTargetLength;
      const std::size_t hi =
        di == 0 ? config.maxSourceLength : config.maxTargetLength;
      std::uniform_int_distribution<std::size_t> len(lo, hi);
      const auto seq = drawSequence(len(rng), latent, byLatent, N,
                                    config.preference, rng);
      std::vector<std::int64_t> ts(seq.size());
      for (auto& t : ts) {
        t = when(rng);
      }
      std::sort(ts.begin(), ts.end());
      auto& sink = di == 0 ? out.source : out.target;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        InteractionRecord r;
        r.userId = uid;
        r.itemId = ids[di][seq[i]];
        r.domain = d;
        r.timestamp = ts[i];
        sink.push_back(std::move(r));
      }
    }
  }
  return out;
}

void writeSyntheticFiles(const SyntheticCorpus& corpus,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto writeInteractions = [&](const std::vector<InteractionRecord>& recs,
                               const char* name) {
    std::ofstream out(dir / name);
    if (!out) {
      throw IoError("cannot write " + (dir / name).string());
    }
    for (const auto& r : recs) {
      out << r.userId << '\t' << r.itemId << "\t5\t" << r.timestamp << '\n';
    }
  };
  writeInteractions(corpus.source, "source.tsv");
  writeInteractions(corpus.target, "target.tsv");
  std::ofstream meta(dir / "metadata.jsonl");
  if (!meta) {
    throw IoError("cannot write " + (dir / "metadata.jsonl").string());
  }
  for (const auto& [id, m] : corpus.metadata) {
    meta << json{{"item_id", id},
                 {"title", m.title},
                 {"category_path", m.categoryPath},
                 {"brand", m.brand},
                 {"description", m.description}}
              .dump()
         << '\n';
  }
}

std::string plantedResponse(std::size_t latent, const Taxonomy& taxonomy,
                            Domain domain, std::mt19937_64& rng) {
  ItemSemanticProfile p;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    const auto& labels = taxonomy.category(k).labels;
    const std::size_t authored = labels.size() - 1;  // minus "Unknown"
    std::vector<std::string> chosen{labels[(latent + k) % authored]};
    if (coin(rng) < 0.25) {
      const std::string extra = labels[(latent + k + 1) % authored];
      if (extra != chosen.front()) {
        chosen.push_back(extra);
      }
    }
    p.assignments.push_back(std::move(chosen));
  }
  const auto& bank = wordBanks()[latent % wordBanks().size()];
  std::uniform_int_distribution<std::size_t> pick(0, bank.size() - 1);
  p.summary = std::string("A ") + bank[pick(rng)] + " " +
              (domain == Domain::Source ? "story" : "picture") + " about " +
              bank[pick(rng)] + ", " + bank[pick(rng)] + " and " +
              bank[pick(rng)] + ".";
  return serializeResponse(p, taxonomy);
}

std::size_t writeMockResponses(const SyntheticCorpus& corpus,
                               const Taxonomy& taxonomy,
                               const std::filesystem::path& dir,
                               double malformedFraction, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  // an exact share of items, chosen by a shuffle, answers badly first
  const std::size_t n = corpus.metadata.size();
  const auto planted = static_cast<std::size_t>(
    std::llround(std::clamp(malformedFraction, 0.0, 1.0) * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 pick(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), pick);
  std::vector<bool> badFirst(n, false);
  for (std::size_t i = 0; i < planted; ++i) {
    badFirst[order[i]] = true;
  }
  std::size_t malformed = 0;
  std::size_t position = 0;
  for (const auto& [id, meta] : corpus.metadata) {
    const std::size_t latent = corpus.itemLatent.at(id);
    const Domain d = id.front() == 'S' ? Domain::Source : Domain::Target;
    const std::string prompt =
      renderPrompt(meta, taxonomy, corpus.config.domains);
    const std::string valid = plantedResponse(latent, taxonomy, d, rng);
    json entry;
    if (badFirst[position++]) {
      entry = json::array({"I am unable to produce structured output today.",
                           valid});
      ++malformed;
    } else {
      entry = valid;
    }
    const auto path = MockLlmClient::entryPath(dir, prompt);
    std::ofstream out(path);
    if (!out) {
      throw IoError("cannot write mock response " + path.string());
    }
    out << entry.dump() << '\n';
  }
  return malformed;
}

} // namespace xdrec
