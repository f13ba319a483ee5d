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
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <xdrec/corpus.h>
#include <xdrec/errors.h>

#include "corpus_oracle.h"
#include "test_support.h"

namespace xdrec {
namespace {

InteractionRecord rec(const std::string& u, const std::string& i, Domain d,
                      std::int64_t ts) {
  InteractionRecord r;
  r.userId = u;
  r.itemId = i;
  r.domain = d;
  r.timestamp = ts;
  return r;
}

TEST(ParseInteractionsTest, KeepsFileOrder) {
  std::istringstream in("u1\ti1\t5\t30\nu2\ti2\t3.5\t10\n\nu1\ti3\t1\t20\n");
  const ParseResult r = parseInteractions(in, Domain::Target);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].itemId, "i1");
  EXPECT_EQ(r.records[1].timestamp, 10);
  EXPECT_EQ(r.records[2].domain, Domain::Target);
  EXPECT_EQ(r.malformed, 0u);
}

TEST(ParseInteractionsTest, EmptyInputIsEmpty) {
  std::istringstream in("");
  const ParseResult r = parseInteractions(in, Domain::Source);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.malformed, 0u);
}

TEST(ParseInteractionsTest, MalformedThreshold) {
  // independent count: a line is valid iff it has four tab fields, nonempty
  // ids, a numeric rating and a nonnegative integer timestamp
  const std::vector<std::string> bad = {
    "u\ti\t5",        "u\ti\tfive\t1", "u\ti\t5\t-3", "\ti\t5\t1",
    "u\ti\t5\t1.5",   "u i 5 1",       "u\ti\t5\t1\textra",
    "u\t\t5\t1",      "u\ti\t\t1",     "u\ti\t5\tx",  "u\ti\t5\t"};
  auto build = [&](std::size_t nBad) {
    std::ostringstream os;
    for (std::size_t k = 0; k < 100 - nBad; ++k) {
      os << "u" << k << "\ti" << k << "\t4\t" << k << '\n';
    }
    for (std::size_t k = 0; k < nBad; ++k) {
      os << bad[k % bad.size()] << '\n';
    }
    return os.str();
  };
  {
    std::istringstream in(build(10));
    const ParseResult r = parseInteractions(in, Domain::Source);
    EXPECT_EQ(r.malformed, 10u);
    EXPECT_EQ(r.records.size(), 90u);
  }
  std::istringstream in(build(11));
  EXPECT_THROW(parseInteractions(in, Domain::Source), FormatError);
}

TEST(ParseInteractionsTest, MissingFileIsIoError) {
  EXPECT_THROW(parseInteractions("/nonexistent/xdrec.tsv", Domain::Source),
               IoError);
}

TEST(ParseMetadataTest, MissingFieldsBecomeEmpty) {
  std::istringstream in(
    R"({"item_id": "a", "title": "T", "brand": "B"})"
    "\n"
    R"({"item_id": "b", "category_path": "Books; Fantasy", "description": "D"})"
    "\n");
  const ItemMetadataStore m = parseMetadata(in);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("a").title, "T");
  EXPECT_EQ(m.at("a").description, "");
  EXPECT_EQ(m.at("b").categoryPath, "Books; Fantasy");
  EXPECT_EQ(m.at("b").brand, "");
}

TEST(PreprocessTest, RetainsUserWithEnoughInteractions) {
  std::vector<InteractionRecord> src, tgt;
  // three items each with ten interactions from filler users present only in
  // one domain, plus the user of interest in both
  for (int k = 0; k < 3; ++k) {
    src.push_back(rec("alice", "s" + std::to_string(k), Domain::Source, k));
    tgt.push_back(rec("alice", "t" + std::to_string(k), Domain::Target, k));
    for (int f = 0; f < 9; ++f) {
      src.push_back(rec("fs" + std::to_string(f), "s" + std::to_string(k),
                        Domain::Source, 100 + k));
      tgt.push_back(rec("ft" + std::to_string(f), "t" + std::to_string(k),
                        Domain::Target, 100 + k));
    }
  }
  const PreprocessResult r = preprocess(src, tgt);
  ASSERT_EQ(r.maps.numUsers(), 1u);
  EXPECT_EQ(r.maps.userId(0), "alice");
  EXPECT_EQ(r.records.size(), 6u);
}

TEST(PreprocessTest, SourceOnlyUserIsDropped) {
  std::vector<InteractionRecord> src, tgt;
  for (int k = 0; k < 3; ++k) {
    src.push_back(rec("both", "s", Domain::Source, k));
    src.push_back(rec("only", "s", Domain::Source, 10 + k));
    tgt.push_back(rec("both", "t", Domain::Target, k));
  }
  PreprocessConfig cfg;
  cfg.minItem = 1;
  const PreprocessResult r = preprocess(src, tgt, cfg);
  EXPECT_EQ(r.maps.users(), std::vector<std::string>{"both"});
}

TEST(PreprocessTest, DuplicatesCountOnce) {
  std::vector<InteractionRecord> src{rec("u", "s", Domain::Source, 1),
                                     rec("u", "s", Domain::Source, 1)};
  std::vector<InteractionRecord> tgt{rec("u", "t", Domain::Target, 1)};
  PreprocessConfig cfg;
  cfg.minItem = 1;
  cfg.minUser = 1;
  const PreprocessResult r = preprocess(src, tgt, cfg);
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.stats.duplicatesRemoved, 1u);
  cfg.minItem = 2;
  EXPECT_THROW(preprocess(src, tgt, cfg), SparseCorpusError);
}

TEST(PreprocessTest, EmptyInputIsConfigError) {
  std::vector<InteractionRecord> tgt{rec("u", "t", Domain::Target, 1)};
  EXPECT_THROW(preprocess({}, tgt), ConfigError);
}

TEST(PreprocessTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto [src, tgt] = testing::randomLogs(rng);
    PreprocessConfig cfg;
    cfg.minItem = 1 + static_cast<int>(rng() % 4);
    cfg.minUser = 1 + static_cast<int>(rng() % 4);
    const auto want = testing::oraclePreprocess(src, tgt, cfg.minItem,
                                                cfg.minUser);
    if (want.empty) {
      EXPECT_THROW(preprocess(src, tgt, cfg), SparseCorpusError);
      continue;
    }
    const PreprocessResult pre = preprocess(src, tgt, cfg);
    const SequenceSet seqs = buildSequences(pre.records, pre.maps);
    std::string why;
    EXPECT_TRUE(testing::matchesOracle(pre, seqs, want, &why))
      << "trial " << trial << ": " << why;
    ++compared;
  }
  EXPECT_GT(compared, 100);
}

TEST(PreprocessTest, SinglePassGuaranteesPerFilterThresholds) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto [src, tgt] = testing::randomLogs(rng);
    PreprocessConfig cfg;
    cfg.minItem = 2;
    cfg.minUser = 2;
    PreprocessResult r;
    try {
      r = preprocess(src, tgt, cfg);
    } catch (const SparseCorpusError&) {
      continue;
    }
    std::map<std::pair<std::string, int>, int> perUser;
    for (const auto& x : r.records) {
      perUser[{x.userId, static_cast<int>(x.domain)}]++;
    }
    for (const auto& u : r.maps.users()) {
      EXPECT_GE((perUser[{u, 0}]), cfg.minUser);
      EXPECT_GE((perUser[{u, 1}]), cfg.minUser);
    }
  }
}

TEST(PreprocessTest, FixedPointModeIsIdempotent) {
  std::mt19937_64 rng(5);
  PreprocessConfig cfg;
  cfg.minItem = 2;
  cfg.minUser = 2;
  cfg.iterateToFixedPoint = true;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [src, tgt] = testing::randomLogs(rng);
    PreprocessResult once;
    try {
      once = preprocess(src, tgt, cfg);
    } catch (const SparseCorpusError&) {
      continue;
    }
    std::vector<InteractionRecord> s2, t2;
    for (const auto& r : once.records) {
      (r.domain == Domain::Source ? s2 : t2).push_back(r);
    }
    const PreprocessResult twice = preprocess(s2, t2, cfg);
    EXPECT_EQ(twice.records, once.records);
    EXPECT_EQ(twice.maps, once.maps);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(BuildSequencesTest, MergesByTimestamp) {
  std::vector<InteractionRecord> records{
    rec("u", "a", Domain::Source, 2), rec("u", "b", Domain::Source, 4),
    rec("u", "x", Domain::Target, 1), rec("u", "y", Domain::Target, 3),
    rec("u", "z", Domain::Target, 5)};
  const IndexMaps maps({"u"}, {"a", "b"}, {"x", "y", "z"});
  const SequenceSet s = buildSequences(records, maps);
  ASSERT_EQ(s.bundles.size(), 1u);
  const auto& b = s.bundles[0];
  const std::vector<MixedEvent> want{{2, Domain::Target},
                                     {0, Domain::Source},
                                     {3, Domain::Target},
                                     {1, Domain::Source},
                                     {4, Domain::Target}};
  EXPECT_EQ(b.mixed, want);
  EXPECT_EQ(b.targetMixedPos, (std::vector<std::size_t>{0, 2, 4}));
}

TEST(BuildSequencesTest, TiesPutSourceFirstAndKeepInputOrder) {
  std::vector<InteractionRecord> records{
    rec("u", "x", Domain::Target, 1), rec("u", "y", Domain::Target, 1),
    rec("u", "b", Domain::Source, 1), rec("u", "a", Domain::Source, 1),
    rec("u", "z", Domain::Target, 1)};
  const IndexMaps maps({"u"}, {"a", "b"}, {"x", "y", "z"});
  const SequenceSet s = buildSequences(records, maps);
  const auto& b = s.bundles.at(0);
  EXPECT_EQ(b.source, (std::vector<ItemIndex>{1, 0}));
  EXPECT_EQ(b.target, (std::vector<ItemIndex>{2, 3, 4}));
  EXPECT_EQ(b.mixed.front().domain, Domain::Source);
  EXPECT_EQ(b.mixed[1].domain, Domain::Source);
}

TEST(BuildSequencesTest, ShortTargetUsersAreExcluded) {
  std::vector<InteractionRecord> records{
    rec("u", "a", Domain::Source, 1), rec("u", "x", Domain::Target, 2),
    rec("u", "y", Domain::Target, 3)};
  const IndexMaps maps({"u"}, {"a"}, {"x", "y"});
  const SequenceSet s = buildSequences(records, maps);
  EXPECT_TRUE(s.bundles.empty());
  EXPECT_EQ(s.excludedUsers, 1u);
}

TEST(SplitTest, LastIsTestSecondToLastIsValid) {
  UserSequenceBundle b;
  b.target = {10, 11, 12, 13};
  const auto s = splitLeaveOneOut(b);
  EXPECT_EQ(s.train, (std::vector<ItemIndex>{10, 11}));
  EXPECT_EQ(s.valid, 12);
  EXPECT_EQ(s.test, 13);
  b.target = {7, 8, 9};
  const auto m = splitLeaveOneOut(b);
  EXPECT_EQ(m.train, std::vector<ItemIndex>{7});
  EXPECT_EQ(m.valid, 8);
  EXPECT_EQ(m.test, 9);
}

TEST(SplitTest, RandomSequencesMatchDirectIndexing) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    UserSequenceBundle b;
    const std::size_t n = 3 + rng() % 20;
    for (std::size_t k = 0; k < n; ++k) {
      b.target.push_back(static_cast<ItemIndex>(rng() % 50));
    }
    const auto s = splitLeaveOneOut(b);
    std::vector<ItemIndex> train;
    for (std::size_t k = 0; k + 2 < n; ++k) {
      train.push_back(b.target[k]);
    }
    ASSERT_EQ(s.train, train);
    ASSERT_EQ(s.valid, b.target[n - 2]);
    ASSERT_EQ(s.test, b.target[n - 1]);
  }
}

TEST(IndexMapsTest, UnifiedRoundTrip) {
  const IndexMaps maps({"u"}, {"a", "b", "c"}, {"x", "y"});
  EXPECT_EQ(maps.targetOffset(), 3);
  for (ItemIndex m = 0; m < 5; ++m) {
    const auto [d, local] = maps.split(m);
    EXPECT_EQ(maps.unified(d, local), m);
  }
  EXPECT_EQ(maps.unified(Domain::Target, 1), 4);
  EXPECT_EQ(maps.itemId(4), "y");
}

TEST(CorpusTest, ConservationAndLeakage) {
  auto [src, tgt] = testing::toyRecords(20, 12, 15, 6, 3);
  PreprocessConfig cfg;
  cfg.minItem = 1;
  const Corpus c = buildCorpus(src, tgt, {}, cfg);
  const PreprocessResult pre = preprocess(src, tgt, cfg);
  std::size_t total = 0;
  for (const auto& b : c.users) {
    total += b.source.size() + b.target.size();
    EXPECT_EQ(b.mixed.size(), b.source.size() + b.target.size());
  }
  EXPECT_EQ(total, pre.records.size());
  EXPECT_EQ(c.metadata.size(), c.maps.numUnifiedItems());
}

TEST(CorpusTest, SaveLoadRoundTripAndByteStability) {
  auto [src, tgt] = testing::toyRecords(8, 6, 7, 5, 11);
  PreprocessConfig cfg;
  cfg.minItem = 1;
  ItemMetadataStore meta;
  meta["s1"] = {"Title", "Books; Fantasy", "Brand", "Desc"};
  const Corpus c = buildCorpus(src, tgt, meta, cfg, {"Books", "Movies"});
  testing::TempDir dir;
  saveCorpus(c, dir / "a");
  const Corpus back = loadCorpus(dir / "a");
  EXPECT_EQ(back.maps, c.maps);
  EXPECT_EQ(back.users, c.users);
  EXPECT_EQ(back.metadata.at("s1"), meta["s1"]);
  EXPECT_EQ(back.domains.target, "Movies");
  saveCorpus(back, dir / "b");
  for (const char* f : {"manifest.json", "users.tsv", "items.tsv",
                        "metadata.jsonl", "sequences.jsonl", "splits.tsv",
                        "stats.txt"}) {
    std::ifstream a(dir / "a" / f), b(dir / "b" / f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
}

TEST(CorpusTest, StatsTableColumns) {
  auto [src, tgt] = testing::toyRecords(4, 5, 5, 4, 1);
  PreprocessConfig cfg;
  cfg.minItem = 1;
  const Corpus c = buildCorpus(src, tgt, {}, cfg, {"Books", "Movies"});
  const std::string t = corpusStatsTable(c);
  EXPECT_NE(t.find("Overlapped Users"), std::string::npos);
  EXPECT_NE(t.find("Avg. Len."), std::string::npos);
  EXPECT_NE(t.find("Books"), std::string::npos);
  EXPECT_NE(t.find("4.00"), std::string::npos);
}

} // namespace
} // namespace xdrec
