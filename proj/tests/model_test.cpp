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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <xdrec/errors.h>
#include <xdrec/model.h>
#include <xdrec/trainer.h>

#include "test_support.h"

namespace xdrec {
namespace {

using testing::randomMatrix;

using Toy = testing::ToyModel;

TEST(AblationTest, NamesKeysAndViews) {
  EXPECT_EQ(allAblations().size(), 8u);
  for (Ablation a : allAblations()) {
    EXPECT_EQ(parseAblation(ablationName(a)), a);
    EXPECT_EQ(parseAblation(ablationKey(a)), a);
  }
  EXPECT_EQ(parseAblation("W/O DOMAGNSEM"), Ablation::NoDomAgnSem);
  EXPECT_THROW(parseAblation("w/o everything"), ConfigError);
  EXPECT_FALSE(viewsFor(Ablation::NoInnSem).inner);
  EXPECT_FALSE(viewsFor(Ablation::NoDomAgnSem).agnostic);
  EXPECT_FALSE(regularizersActive(Ablation::NoDomAgnSem));
  EXPECT_FALSE(regularizersActive(Ablation::NoConReg));
  EXPECT_TRUE(regularizersActive(Ablation::NoInnSem));
}

TEST(LossTest, BprClosedForms) {
  const std::vector<double> pos{2.0, 0.0, -1.0}, neg{0.0, 0.0, 1.0};
  const double want =
    (std::log1p(std::exp(-2.0)) + std::log(2.0) + std::log1p(std::exp(2.0))) /
    3.0;
  EXPECT_NEAR(bprLoss(pos, neg), want, 1e-15);
  EXPECT_NEAR(bprLoss(std::vector<double>{500.0}, std::vector<double>{0.0}),
              0.0, 1e-200);
  EXPECT_NEAR(bprLoss(std::vector<double>{0.0}, std::vector<double>{500.0}),
              500.0, 1e-10);
  EXPECT_THROW(bprLoss(std::vector<double>{}, std::vector<double>{}),
               ShapeError);
  EXPECT_NEAR(totalLoss(0.5, 2.0, 3.0, 0.1), 1.0, 1e-15);
  EXPECT_THROW(totalLoss(NAN, 0, 0, 0.1), DivergenceError);
}

TEST(FusionTest, StartsAtOneThirdAndCombinesLinearly) {
  const FusionParams f = FusionParams::init();
  EXPECT_EQ(f.alpha.value(0, 0), 1.0 / 3.0);
  EXPECT_EQ(f.beta.value(0, 0), 1.0 / 3.0);
  EXPECT_EQ(f.gamma.value(0, 0), 1.0 / 3.0);
  RowVector a(2), b(2), c(2);
  a << 1, 2;
  b << 3, 4;
  c << 5, 6;
  RowVector want(2);
  want << 0.5 * 1 + 0.25 * 3 + 2 * 5, 0.5 * 2 + 0.25 * 4 + 2 * 6;
  EXPECT_LT((adaptiveFuse(a, b, c, 0.5, 0.25, 2.0) - want).norm(), 1e-15);
  EXPECT_THROW(adaptiveFuse(a, b, RowVector(3), 1, 1, 1), ShapeError);
}

TEST(ScoreTest, DotProductWithIdTable) {
  std::mt19937_64 rng(1);
  const Matrix table = randomMatrix(5, 3, rng);
  const RowVector z = randomMatrix(1, 3, rng);
  EXPECT_EQ(score(z, 2, table), z.dot(table.row(2)));
  EXPECT_THROW(score(z, 5, table), ShapeError);
  EXPECT_THROW(score(RowVector(2), 0, table), ShapeError);
}

TEST(ModelTest, InitIsDeterministicPerSeed) {
  Toy a, b;
  const auto pa = a.state.parameters();
  const auto pb = b.state.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  }
  Toy c;
  c.state = ModelState::init(c.hp, Ablation::None, c.corpus.maps,
                             c.tax.numSubcategories(), 4);
  EXPECT_NE(c.state.tables.itemId.value, a.state.tables.itemId.value);
}

TEST(ModelTest, BatchedPointsEqualSinglePoints) {
  Toy t;
  // a window covering every sequence keeps positions independent of horizon
  t.hp.maxSeqLen = 32;
  t.state = ModelState::init(t.hp, Ablation::None, t.corpus.maps,
                             t.tax.numSubcategories(), 3);
  Scorer scorer(t.state, t.inputs);
  const auto& b = t.corpus.users[0];
  const std::size_t horizon = b.numTrainTarget() + 1;
  std::vector<std::size_t> points;
  for (std::size_t k = 1; k <= horizon; ++k) {
    points.push_back(k);
  }
  ad::Tape tape;
  const UserStates all = scorer.userVectors(b, horizon, points, tape);
  ASSERT_EQ(all.kept, points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto z = scorer.userVector(b, points[i]);
    ASSERT_TRUE(z.has_value());
    EXPECT_LT((*z - RowVector(all.z.value().row(static_cast<Index>(i)))).norm(),
              1e-12);
  }
}

TEST(ModelTest, FutureTargetsDoNotLeakIntoPredictions) {
  Toy t;
  Scorer scorer(t.state, t.inputs);
  const auto& b = t.corpus.users[1];
  UserSequenceBundle altered = b;
  // swap the test item for a different target item
  const ItemIndex other = b.target.back() == t.inputs.domainItems[1][0]
                            ? t.inputs.domainItems[1][1]
                            : t.inputs.domainItems[1][0];
  altered.target.back() = other;
  altered.mixed[altered.targetMixedPos.back()].item = other;
  const std::size_t k = b.numTrainTarget();
  EXPECT_EQ(*scorer.userVector(b, k), *scorer.userVector(altered, k));
}

TEST(ModelTest, ForwardScoresAreDeterministicAndMatchTable) {
  Toy t;
  const auto& b = t.corpus.users[0];
  const std::vector<ItemIndex> cands{t.inputs.domainItems[1][0],
                                     t.inputs.domainItems[1][2]};
  const auto s1 = forwardUser(t.state, t.inputs, b, 2, cands);
  const auto s2 = forwardUser(t.state, t.inputs, b, 2, cands);
  EXPECT_EQ(s1, s2);
  Scorer scorer(t.state, t.inputs);
  const RowVector z = *scorer.userVector(b, 2);
  EXPECT_NEAR(s1[1], z.dot(t.state.tables.itemId.value.row(cands[1])), 1e-12);
}

TEST(ModelTest, WindowDropsOldPoints) {
  Toy t(Ablation::None, 3, 8);
  t.hp.maxSeqLen = 3;
  t.state = ModelState::init(t.hp, Ablation::None, t.corpus.maps,
                             t.tax.numSubcategories(), 3);
  Scorer scorer(t.state, t.inputs);
  const auto& b = t.corpus.users[0];
  ad::Tape tape;
  const std::vector<std::size_t> points{1, 2, 3, 4, 5, 6};
  const UserStates s = scorer.userVectors(b, 6, points, tape);
  // point k needs target state k-1 and mixed state pos[k]-1 inside the last
  // three positions of their sequences
  const std::size_t mixedEnd = b.targetMixedPos[6];
  std::vector<std::size_t> want;
  for (std::size_t k : points) {
    if (k - 1 >= 3 && b.targetMixedPos[k] - 1 >= mixedEnd - 3) {
      want.push_back(k);
    }
  }
  EXPECT_EQ(s.kept, want);
  EXPECT_FALSE(want.empty());
  // alone, the first point always fits its own window
  EXPECT_TRUE(scorer.userVector(b, 1).has_value());
}

TEST(ModelTest, EveryAblationRunsForward) {
  for (Ablation a : allAblations()) {
    Toy t(a);
    const auto s = forwardUser(t.state, t.inputs, t.corpus.users[0], 2,
                               t.inputs.domainItems[1]);
    for (double v : s) {
      EXPECT_TRUE(std::isfinite(v)) << ablationName(a);
    }
    if (a == Ablation::SimpGraph) {
      EXPECT_EQ(t.inputs.mixedGraph.numNodes(), 0);
    }
  }
}

TEST(ModelTest, CachedPropagationMatchesLiveLossValue) {
  Toy t;
  TrainConfig cfg;
  const auto users = t.users();
  std::mt19937_64 r1(1), r2(1);
  ad::Tape live;
  const BatchLoss a = batchLoss(live, t.state, t.inputs, users, cfg, r1, nullptr);
  ad::Tape base, tape;
  const Propagated cached = propagate(base, t.state, t.inputs);
  const BatchLoss b =
    batchLoss(tape, t.state, t.inputs, users, cfg, r2, nullptr, &cached);
  EXPECT_NEAR(a.total.scalar(), b.total.scalar(), 1e-12);
  EXPECT_EQ(a.pairs, b.pairs);
}

TEST(ModelTest, EndToEndGradientsMatchFiniteDifferences) {
  for (Ablation a : {Ablation::None, Ablation::NoCDBehav, Ablation::SimpGraph}) {
    Toy t(a);
    TrainConfig cfg;
    const auto users = t.users();
    const std::mt19937_64 rng0(77);
    auto checks =
      testing::checkGradients(t.state.parameters(), [&](ad::Tape& tape) {
        std::mt19937_64 rng = rng0;
        return batchLoss(tape, t.state, t.inputs, users, cfg, rng, nullptr)
          .total;
      });
    for (const auto& c : checks) {
      EXPECT_LT(c.relError, 1e-4) << ablationName(a) << " " << c.name;
    }
  }
}

} // namespace
} // namespace xdrec
