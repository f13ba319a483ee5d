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

#include <fstream>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include <json.hpp>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>
#include <xdrec/llm_client.h>
#include <xdrec/semantics.h>
#include <xdrec/synthetic.h>
#include <xdrec/text_encoder.h>

#include "test_support.h"

namespace xdrec {
namespace {

using json = nlohmann::json;

/// Returns scripted responses in order (the last repeats) and counts calls.
class ScriptedClient : public LlmClient {
 public:
  explicit ScriptedClient(std::vector<std::string> script)
    : script_(std::move(script)) {}

  std::string send(const std::string& prompt,
                   const GenerationParams&) override {
    lastPrompt = prompt;
    const std::size_t k = std::min(calls, script_.size() - 1);
    ++calls;
    if (script_[k] == "<transport>") {
      throw TransportError("scripted outage");
    }
    return script_[k];
  }

  std::size_t calls = 0;
  std::string lastPrompt;

 private:
  std::vector<std::string> script_;
};

// Taxonomy covering every label of the published response example.
Taxonomy exampleTaxonomy() {
  return Taxonomy({{"Genre", {"Drama", "Historical", "Comedy"}},
                   {"Target Audience", {"Young Adult", "Children", "Adult"}},
                   {"Themes", {"Social Issues", "Political Intrigue", "Love"}},
                   {"Setting", {"Historical", "Urban", "Rural"}},
                   {"Tone", {"Serious", "Dark", "Light"}},
                   {"Emotional Arc", {"Stressful", "Uplifting"}},
                   {"Pace", {"Moderate-Paced", "Fast-Paced", "Slow-Paced"}},
                   {"Format/Length", {"Medium", "Short", "Long"}},
                   {"Origin", {"Original Work", "Adaptation"}},
                   {"Narrative Style",
                    {"Third Person Limited", "First Person"}}});
}

const char* kExampleResponse = R"({
  "mapped_id": "708",
  "features": {
    "Genre": ["Drama", "Historical"],
    "Target Audience": ["Young Adult"],
    "Themes": ["Social Issues", "Political Intrigue"],
    "Setting": ["Historical", "Urban"],
    "Tone": ["Serious", "Dark"],
    "Emotional Arc": ["Stressful"],
    "Pace": ["Moderate-Paced"],
    "Format/Length": ["Medium"],
    "Origin": ["Original Work"],
    "Narrative Style": ["Third Person Limited"]
  },
  "semantic_summary": "A serious young-adult story set in the past."
})";

std::string validFor(const Taxonomy& tax) {
  ItemSemanticProfile p;
  for (const auto& c : tax.categories()) {
    p.assignments.push_back({c.labels[0]});
  }
  p.summary = "summary";
  return serializeResponse(p, tax);
}

TEST(TaxonomyTest, AppendsUnknownAndValidates) {
  const Taxonomy t = testing::smallTaxonomy();
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.category(0).labels.back(), "Unknown");
  EXPECT_EQ(t.numSubcategories(), 4u + 3u + 4u);
  EXPECT_EQ(t.subcategoryRow(1, 0), 4u);
  EXPECT_EQ(t.labelIndex(0, "comedy"), 1u);
  EXPECT_THROW(Taxonomy(std::vector<Category>{{"A", {"x"}}}), ConfigError);
  EXPECT_THROW(Taxonomy(std::vector<Category>{{"A", {"x", "y"}}, {"A", {"x", "y"}}}), ConfigError);
  EXPECT_THROW(Taxonomy(std::vector<Category>{{"A", {"x", "X"}}}), ConfigError);
  EXPECT_THROW(Taxonomy(std::vector<Category>{}), ConfigError);
}

TEST(TaxonomyTest, DefaultHasEightCategoriesAndJsonRoundTrips) {
  const Taxonomy t = defaultTaxonomy();
  EXPECT_EQ(t.size(), 8u);
  for (const char* name : {"Genre", "Target Audience", "Themes", "Setting",
                           "Tone", "Pace", "Format/Length", "Narrative Style"}) {
    EXPECT_TRUE(t.categoryIndex(name).has_value()) << name;
  }
  const Taxonomy back = Taxonomy::fromJson(t.toJson());
  EXPECT_EQ(back.hash(), t.hash());
  EXPECT_NE(testing::smallTaxonomy().hash(), t.hash());
}

TEST(PromptTest, EmbedsMetadataVerbatim) {
  ItemMetadata m;
  m.categoryPath = "Books; Teen & Science Fiction & Fantasy";
  m.brand = "Visit Amazon's Lloyd Alexander Page";
  m.title = "The Prydain Chronicles";
  const std::string p = renderPrompt(m, defaultTaxonomy(), {"Books", "Movies"});
  EXPECT_NE(p.find("[Books; Teen & Science Fiction & Fantasy]"),
            std::string::npos);
  EXPECT_NE(p.find("[Visit Amazon's Lloyd Alexander Page]"), std::string::npos);
  EXPECT_NE(p.find("The Prydain Chronicles"), std::string::npos);
  EXPECT_NE(p.find("Books or Movies"), std::string::npos);
  EXPECT_EQ(p, renderPrompt(m, defaultTaxonomy(), {"Books", "Movies"}));
  EXPECT_EQ(p.find('{' + std::string("schema}")), std::string::npos);
}

TEST(PromptTest, SchemaListsExactlyTheTaxonomy) {
  const Taxonomy t({{"Genre", {"Drama", "Comedy"}},
                    {"Target Audience", {"Kids", "Adults"}}});
  const std::string p = renderPrompt({}, t);
  EXPECT_NE(p.find("Genre"), std::string::npos);
  EXPECT_NE(p.find("Target Audience"), std::string::npos);
  EXPECT_NE(p.find("Comedy"), std::string::npos);
  EXPECT_NE(p.find("Kids"), std::string::npos);
  EXPECT_EQ(p.find("Tone"), std::string::npos);
  EXPECT_NE(p.find("[]"), std::string::npos);
}

TEST(ValidateTest, AcceptsPublishedExampleIgnoringMappedId) {
  const Taxonomy t = exampleTaxonomy();
  const auto r = validateProfile(kExampleResponse, t);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.profile->assignments[0],
            (std::vector<std::string>{"Drama", "Historical"}));
  EXPECT_EQ(r.profile->itemId, "");
  EXPECT_EQ(r.profile->provenance, Provenance::Llm);
}

TEST(ValidateTest, AcceptsFencedAndCaseVariants) {
  const Taxonomy t = testing::smallTaxonomy();
  const std::string fenced =
    "Sure, here it is:\n```json\n"
    R"({"Features": {"genre": ["drama"], "Tone": ["Dark"], "Pace": ["Fast"]},
        "SemanticSummary": "ok"})"
    "\n```";
  const auto r = validateProfile(fenced, t);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.profile->assignments[0], std::vector<std::string>{"Drama"});
}

TEST(ValidateTest, ReportsEachErrorKind) {
  const Taxonomy t = testing::smallTaxonomy();
  using K = ValidationError::Kind;
  auto kinds = [&](const std::string& raw) {
    std::vector<K> out;
    for (const auto& e : validateProfile(raw, t).errors) {
      out.push_back(e.kind);
    }
    return out;
  };
  EXPECT_EQ(kinds("not json at all"), std::vector<K>{K::ParseFailure});
  const auto missing = validateProfile(
    R"({"features": {"Genre": ["Drama"], "Pace": ["Fast"]},
        "semantic_summary": "s"})",
    t);
  ASSERT_FALSE(missing.ok());
  ASSERT_EQ(missing.errors.size(), 1u);
  EXPECT_EQ(missing.errors[0].kind, K::MissingCategory);
  EXPECT_EQ(missing.errors[0].category, "Tone");
  const auto oov = validateProfile(
    R"({"features": {"Genre": ["Cyberpunk", "Drama"], "Tone": ["Dark"],
        "Pace": ["Fast"]}, "semantic_summary": "s"})",
    t);
  ASSERT_EQ(oov.errors.size(), 1u);
  EXPECT_EQ(oov.errors[0].kind, K::OutOfVocabulary);
  EXPECT_EQ(oov.errors[0].category, "Genre");
  EXPECT_EQ(oov.errors[0].label, "Cyberpunk");
  EXPECT_EQ(kinds(R"({"features": {"Genre": [], "Tone": ["Dark"],
                      "Pace": ["Fast"]}, "semantic_summary": "s"})"),
            std::vector<K>{K::EmptyLabels});
  EXPECT_EQ(kinds(R"({"features": {"Genre": ["Drama"], "Tone": ["Dark"],
                      "Pace": ["Fast"]}, "semantic_summary": "  "})"),
            std::vector<K>{K::MissingSummary});
}

TEST(ValidateTest, SerializeThenValidateIsIdentity) {
  const Taxonomy t = defaultTaxonomy();
  std::mt19937_64 rng(12);
  const IndexMaps maps({"u"}, {"a", "b", "c"}, {"x", "y"});
  for (auto p : testing::randomProfiles(maps, t, rng)) {
    const auto r = validateProfile(serializeResponse(p, t), t);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.profile->assignments, p.assignments);
    EXPECT_EQ(r.profile->summary, p.summary);
  }
}

class ExtractorTest : public ::testing::Test {
 protected:
  Taxonomy tax = testing::smallTaxonomy();
  ItemMetadata meta{"Title", "Books", "Brand", "Description"};
};

TEST_F(ExtractorTest, HappyPathCallsOnce) {
  ScriptedClient client({validFor(tax)});
  SemanticExtractor ex(client, tax, nullptr);
  const auto p = ex.extract(3, "item3", meta);
  EXPECT_EQ(client.calls, 1u);
  EXPECT_EQ(p.provenance, Provenance::Llm);
  EXPECT_EQ(p.item, 3);
  EXPECT_EQ(p.itemId, "item3");
  EXPECT_EQ(client.lastPrompt, renderPrompt(meta, tax));
}

TEST_F(ExtractorTest, RetriesUntilValid) {
  ScriptedClient client({"garbage", "{\"features\": {}}", validFor(tax)});
  SemanticExtractor ex(client, tax, nullptr);
  const auto p = ex.extract(0, "i", meta);
  EXPECT_EQ(client.calls, 3u);
  EXPECT_EQ(p.provenance, Provenance::Llm);
  EXPECT_EQ(ex.stats().invalidResponses, 2u);
}

TEST_F(ExtractorTest, FallsBackToUnknownEverywhere) {
  ScriptedClient client({"garbage"});
  SemanticExtractor ex(client, tax, nullptr);
  const auto p = ex.extract(0, "i", meta);
  EXPECT_EQ(client.calls, 3u);
  EXPECT_EQ(p.provenance, Provenance::Fallback);
  ASSERT_EQ(p.assignments.size(), tax.size());
  for (const auto& a : p.assignments) {
    EXPECT_EQ(a, std::vector<std::string>{"Unknown"});
  }
  EXPECT_FALSE(p.summary.empty());
}

TEST_F(ExtractorTest, TransportFailuresAreRetriedThenFallBack) {
  ScriptedClient flaky({"<transport>", validFor(tax)});
  SemanticExtractor ok(flaky, tax, nullptr);
  EXPECT_EQ(ok.extract(0, "i", meta).provenance, Provenance::Llm);
  EXPECT_EQ(ok.stats().transportFailures, 1u);

  ScriptedClient down({"<transport>"});
  SemanticExtractor bad(down, tax, nullptr);
  EXPECT_EQ(bad.extract(0, "i", meta).provenance, Provenance::Fallback);
}

TEST_F(ExtractorTest, CacheReplayAndCorruptionRecovery) {
  testing::TempDir dir;
  SemanticCache cache(dir.path());
  ScriptedClient client({validFor(tax)});
  {
    SemanticExtractor ex(client, tax, &cache);
    ex.extract(0, "a", meta);
    ex.extract(1, "b", meta);
  }
  EXPECT_EQ(client.calls, 2u);
  SemanticExtractor replay(client, tax, &cache);
  const auto p = replay.extract(0, "a", meta);
  EXPECT_EQ(client.calls, 2u);
  EXPECT_EQ(replay.stats().cacheHits, 1u);
  EXPECT_EQ(p.itemId, "a");

  // corrupt one entry on disk
  const std::string key =
    SemanticCache::key("b", tax.hash(), sha256Hex(kPromptTemplate));
  ASSERT_TRUE(std::filesystem::exists(cache.pathFor(key)));
  std::ofstream(cache.pathFor(key)) << "{ truncated";
  const auto q = replay.extract(1, "b", meta);
  EXPECT_EQ(q.provenance, Provenance::Llm);
  EXPECT_EQ(client.calls, 3u);
  EXPECT_TRUE(cache.get(key).has_value());
}

TEST_F(ExtractorTest, CacheHitIsByteIdentical) {
  testing::TempDir dir;
  SemanticCache cache(dir.path());
  const std::string raw = "  {\"weird\": \"spacing\"}\n\t";
  cache.put("abcdef", {"id", "th", "tp", raw});
  const auto e = cache.get("abcdef");
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->raw, raw);
  EXPECT_EQ(cache.pathFor("abcdef"), dir.path() / "ab" / "cd" / "abcdef.json");
  EXPECT_FALSE(cache.get("missing").has_value());
}

TEST_F(ExtractorTest, BatchFallbackRateIsFatal) {
  auto [src, tgt] = testing::toyRecords(4, 5, 5, 4, 1);
  PreprocessConfig cfg;
  cfg.minItem = 1;
  const Corpus corpus = buildCorpus(src, tgt, {}, cfg);
  ScriptedClient client({"garbage"});
  SemanticExtractor ex(client, tax, nullptr);
  EXPECT_THROW(ex.extractAll(corpus), ExtractionQualityError);
}

TEST_F(ExtractorTest, ParallelWorkersMatchSerial) {
  auto [src, tgt] = testing::toyRecords(10, 9, 9, 4, 2);
  PreprocessConfig cfg;
  cfg.minItem = 1;
  const Corpus corpus = buildCorpus(src, tgt, {}, cfg);
  ScriptedClient a({validFor(tax)}), b({validFor(tax)});
  ExtractionConfig serial, parallel;
  parallel.workers = 4;
  const auto x = SemanticExtractor(a, tax, nullptr, serial).extractAll(corpus);
  const auto y = SemanticExtractor(b, tax, nullptr, parallel).extractAll(corpus);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.size(), corpus.maps.numUnifiedItems());
}

TEST(MockClientTest, ReplaysSequencesAndMissingIsTransportError) {
  testing::TempDir dir;
  std::ofstream(MockLlmClient::entryPath(dir.path(), "p1"))
    << json(std::vector<std::string>{"first", "second"}).dump();
  std::ofstream(MockLlmClient::entryPath(dir.path(), "p2")) << json("only");
  MockLlmClient mock(dir.path());
  EXPECT_EQ(mock.send("p1", {}), "first");
  EXPECT_EQ(mock.send("p1", {}), "second");
  EXPECT_EQ(mock.send("p1", {}), "second");
  EXPECT_EQ(mock.send("p2", {}), "only");
  EXPECT_THROW(mock.send("p3", {}), TransportError);
  EXPECT_EQ(mock.calls(), 5u);
  EXPECT_EQ(MockLlmClient::entryPath(dir.path(), "p1").filename(),
            sha256Hex("p1") + ".json");
}

TEST(MockClientTest, PlantedResponsesHaveAnExactMalformedShare) {
  testing::TempDir dir;
  SyntheticConfig sc;
  sc.users = 10;
  sc.itemsPerDomain = 20;
  const SyntheticCorpus syn = generateSynthetic(sc);
  const Taxonomy tax = defaultTaxonomy();
  EXPECT_EQ(writeMockResponses(syn, tax, dir.path(), 0.25), 10u);

  MockLlmClient mock(dir.path());
  std::size_t badFirst = 0;
  for (const auto& [id, meta] : syn.metadata) {
    const std::string prompt = renderPrompt(meta, tax, sc.domains);
    if (!validateProfile(mock.send(prompt, {}), tax).ok()) {
      ++badFirst;
      EXPECT_TRUE(validateProfile(mock.send(prompt, {}), tax).ok()) << id;
    }
  }
  EXPECT_EQ(badFirst, 10u);
}

// Independent frequency count over (category, label) pairs.
std::vector<std::vector<std::vector<std::string>>> oracleFilter(
  const std::vector<ItemSemanticProfile>& profiles, std::size_t K,
  int threshold) {
  std::vector<std::map<std::string, int>> freq(K);
  for (const auto& p : profiles) {
    for (std::size_t k = 0; k < K; ++k) {
      for (const auto& l : p.assignments[k]) {
        freq[k][l]++;
      }
    }
  }
  std::vector<std::vector<std::vector<std::string>>> out;
  for (const auto& p : profiles) {
    std::vector<std::vector<std::string>> a(K);
    for (std::size_t k = 0; k < K; ++k) {
      for (const auto& l : p.assignments[k]) {
        const std::string kept = freq[k][l] >= threshold ? l : "Unknown";
        if (std::find(a[k].begin(), a[k].end(), kept) == a[k].end()) {
          a[k].push_back(kept);
        }
      }
    }
    out.push_back(a);
  }
  return out;
}

TEST(FilterOutliersTest, ThresholdBoundary) {
  const Taxonomy t({{"Genre", {"A", "B", "C"}}});
  auto prof = [](std::string l) {
    ItemSemanticProfile p;
    p.assignments = {{std::move(l)}};
    p.summary = "s";
    return p;
  };
  const auto out = filterOutliers({prof("A"), prof("B"), prof("B")}, t, 2);
  EXPECT_EQ(out[0].assignments[0], std::vector<std::string>{"Unknown"});
  EXPECT_EQ(out[1].assignments[0], std::vector<std::string>{"B"});
  EXPECT_EQ(out[2].assignments[0], std::vector<std::string>{"B"});
}

TEST(FilterOutliersTest, MatchesFrequencyOracleAndIsIdempotent) {
  const Taxonomy t = defaultTaxonomy();
  std::mt19937_64 rng(99);
  std::vector<std::string> users{"u"}, src, tgt;
  for (int i = 0; i < 250; ++i) {
    src.push_back("s" + std::to_string(i));
    tgt.push_back("t" + std::to_string(i));
  }
  const IndexMaps maps(users, src, tgt);
  const auto profiles = testing::randomProfiles(maps, t, rng);
  for (int threshold : {2, 30, 60}) {
    const auto once = filterOutliers(profiles, t, threshold);
    const auto want = oracleFilter(profiles, t.size(), threshold);
    ASSERT_EQ(once.size(), want.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      for (std::size_t k = 0; k < t.size(); ++k) {
        auto got = once[i].assignments[k];
        auto exp = want[i][k];
        std::sort(got.begin(), got.end());
        std::sort(exp.begin(), exp.end());
        ASSERT_EQ(got, exp) << "profile " << i << " category " << k;
        ASSERT_FALSE(got.empty());
      }
    }
    EXPECT_EQ(filterOutliers(once, t, threshold), once);
  }
}

TEST(ProfileExportTest, RoundTrip) {
  const Taxonomy t = testing::smallTaxonomy();
  std::mt19937_64 rng(4);
  const IndexMaps maps({"u"}, {"a", "b"}, {"x", "y", "z"});
  auto profiles = testing::randomProfiles(maps, t, rng);
  profiles[2].provenance = Provenance::Fallback;
  testing::TempDir dir;
  writeProfiles(dir / "p.jsonl", profiles, t);
  EXPECT_EQ(readProfiles(dir / "p.jsonl", t, maps), profiles);
  const IndexMaps bigger({"u"}, {"a", "b", "c"}, {"x", "y", "z"});
  EXPECT_THROW(readProfiles(dir / "p.jsonl", t, bigger), Error);
}

// Trigram histogram recomputed by hand.
RowVector trigramOracle(const std::string& s, std::size_t dim) {
  RowVector v = RowVector::Zero(static_cast<Index>(dim));
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    const std::string g = s.substr(i, 3);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : g) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    v(static_cast<Index>(h % dim)) += 1.0;
  }
  return v.norm() > 0 ? RowVector(v / v.norm()) : v;
}

TEST(TextEncoderTest, HashedTrigramsMatchHandComputation) {
  HashedTrigramEncoder enc(64);
  EXPECT_TRUE(enc.encode("").isZero());
  EXPECT_TRUE(enc.encode("ab").isZero());
  for (const std::string s : {"a dark detective story", "light romance"}) {
    const RowVector v = enc.encode(s);
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    EXPECT_LT((v - trigramOracle(s, 64)).norm(), 1e-12);
    EXPECT_EQ(v, enc.encode(s));
  }
}

TEST(TextEncoderTest, UnreachableRemoteIsFatalUnlessFallbackAllowed) {
  auto remote = [] {
    return std::make_unique<HttpTextEncoder>("http://127.0.0.1:9", "m",
                                             "XDREC_NO_SUCH_KEY", 16,
                                             std::chrono::seconds(1));
  };
  FallbackTextEncoder strict(remote(), false);
  EXPECT_THROW(strict.encode("hello"), TransportError);
  FallbackTextEncoder lenient(remote(), true);
  EXPECT_EQ(lenient.encode("hello"), HashedTrigramEncoder(16).encode("hello"));
  EXPECT_TRUE(lenient.fellBack());
}

} // namespace
} // namespace xdrec
