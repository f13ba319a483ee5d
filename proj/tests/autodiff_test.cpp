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

#include <xdrec/autodiff.h>
#include <xdrec/optimizer.h>

#include "test_support.h"

namespace xdrec {
namespace {

using testing::checkGradients;
using testing::makeParam;
using testing::randomMatrix;

constexpr double kTol = 1e-6;

void expectGradientsMatch(const std::vector<Parameter*>& params,
                          const std::function<ad::Var(ad::Tape&)>& loss) {
  for (const auto& g : checkGradients(params, loss)) {
    EXPECT_LT(g.relError, kTol) << g.name;
  }
}

// Contracting with a fixed random matrix makes every output entry matter.
ad::Var contract(ad::Var x, const Matrix& w) {
  return ad::sumAll(ad::mulConst(x, w));
}

class OpGradientTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{17};
};

TEST_F(OpGradientTest, MatmulAndTranspose) {
  Parameter a = makeParam("a", randomMatrix(3, 4, rng));
  Parameter b = makeParam("b", randomMatrix(4, 2, rng));
  Parameter c = makeParam("c", randomMatrix(5, 4, rng));
  const Matrix w1 = randomMatrix(3, 2, rng);
  const Matrix w2 = randomMatrix(3, 5, rng);
  expectGradientsMatch({&a, &b, &c}, [&](ad::Tape& t) {
    ad::Var pa = t.param(a);
    return ad::add(contract(ad::matmul(pa, t.param(b)), w1),
                   contract(ad::matmulTransB(pa, t.param(c)), w2));
  });
}

TEST_F(OpGradientTest, ElementwiseAndBroadcast) {
  Parameter a = makeParam("a", randomMatrix(3, 4, rng));
  Parameter b = makeParam("b", randomMatrix(3, 4, rng));
  Parameter row = makeParam("row", randomMatrix(1, 4, rng));
  Parameter s = makeParam("s", randomMatrix(1, 1, rng));
  const Matrix w = randomMatrix(3, 4, rng);
  expectGradientsMatch({&a, &b, &row, &s}, [&](ad::Tape& t) {
    ad::Var x = ad::sub(t.param(a), ad::scale(t.param(b), 0.7));
    x = ad::addRow(x, t.param(row));
    x = ad::scaleBy(t.param(s), x);
    return contract(ad::leakyRelu(x, 0.1), w);
  });
}

TEST_F(OpGradientTest, ConcatSliceGather) {
  Parameter a = makeParam("a", randomMatrix(4, 2, rng));
  Parameter b = makeParam("b", randomMatrix(4, 3, rng));
  const std::vector<Index> rows{3, 0, 3, 1};
  const Matrix w = randomMatrix(4, 5, rng);
  const Matrix w2 = randomMatrix(2, 2, rng);
  expectGradientsMatch({&a, &b}, [&](ad::Tape& t) {
    std::vector<ad::Var> parts{t.param(a), t.param(b)};
    ad::Var cat = ad::concatCols(parts);
    ad::Var g = ad::gatherRows(cat, rows);
    std::vector<ad::Var> stacked{t.param(a), t.param(a)};
    ad::Var sl = ad::sliceRows(ad::concatRows(stacked), 3, 2);
    return ad::add(contract(g, w), contract(sl, w2));
  });
}

TEST_F(OpGradientTest, SparseProduct) {
  std::vector<Eigen::Triplet<double>> trip{{0, 1, 0.5}, {1, 0, 0.5},
                                           {2, 2, 1.0}, {0, 2, -0.3}};
  SparseMatrix s(3, 3);
  s.setFromTriplets(trip.begin(), trip.end());
  Parameter a = makeParam("a", randomMatrix(3, 2, rng));
  const Matrix w = randomMatrix(3, 2, rng);
  expectGradientsMatch({&a}, [&](ad::Tape& t) {
    return contract(ad::spmm(s, t.param(a)), w);
  });
}

TEST_F(OpGradientTest, SoftmaxCausalAndFull) {
  Parameter a = makeParam("a", randomMatrix(4, 4, rng));
  const Matrix w = randomMatrix(4, 4, rng);
  expectGradientsMatch({&a}, [&](ad::Tape& t) {
    return ad::add(contract(ad::softmaxRows(t.param(a), true), w),
                   contract(ad::softmaxRows(t.param(a), false), w));
  });
}

TEST_F(OpGradientTest, LayerNorm) {
  Parameter a = makeParam("a", randomMatrix(3, 5, rng));
  Parameter g = makeParam("g", randomMatrix(1, 5, rng));
  Parameter b = makeParam("b", randomMatrix(1, 5, rng));
  const Matrix w = randomMatrix(3, 5, rng);
  expectGradientsMatch({&a, &g, &b}, [&](ad::Tape& t) {
    return contract(
      ad::layerNorm(t.param(a), t.param(g), t.param(b), 1e-8), w);
  });
}

TEST_F(OpGradientTest, NormalizeDiagonalCrossEntropySoftplus) {
  Parameter a = makeParam("a", randomMatrix(4, 3, rng));
  Parameter b = makeParam("b", randomMatrix(4, 3, rng));
  Parameter c = makeParam("c", randomMatrix(5, 1, rng, 3.0));
  expectGradientsMatch({&a, &b, &c}, [&](ad::Tape& t) {
    ad::Var s = ad::matmulTransB(ad::normalizeRows(t.param(a)),
                                 ad::normalizeRows(t.param(b)));
    ad::Var ce = ad::diagonalCrossEntropy(ad::scale(s, 1.0 / 0.3));
    return ad::add(ce, ad::meanAll(ad::softplus(t.param(c))));
  });
}

TEST_F(OpGradientTest, RowDotAndRelu) {
  Parameter a = makeParam("a", randomMatrix(4, 3, rng));
  Parameter b = makeParam("b", randomMatrix(4, 3, rng));
  const Matrix w = randomMatrix(4, 1, rng);
  expectGradientsMatch({&a, &b}, [&](ad::Tape& t) {
    return contract(ad::rowDot(ad::relu(t.param(a)), t.param(b)), w);
  });
}

TEST(AutodiffTest, CausalSoftmaxMasksFuturePositions) {
  ad::Tape t;
  std::mt19937_64 rng(3);
  ad::Var s = ad::softmaxRows(t.constant(randomMatrix(5, 5, rng)), true);
  for (Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(s.value().row(i).sum(), 1.0, 1e-12);
    for (Index j = i + 1; j < 5; ++j) {
      EXPECT_EQ(s.value()(i, j), 0.0);
    }
  }
}

TEST(AutodiffTest, NormalizeRowsGuardsZeroRows) {
  ad::Tape t;
  Parameter a = makeParam("a", Matrix::Zero(3, 2));
  a.value.row(1) << 3.0, 4.0;
  std::size_t zeros = 0;
  ad::Var n = ad::normalizeRows(t.param(a), 1e-12, &zeros);
  EXPECT_EQ(zeros, 2u);
  EXPECT_EQ(n.value().row(0).norm(), 0.0);
  EXPECT_NEAR(n.value()(1, 0), 0.6, 1e-15);
  t.backward(ad::sumAll(n));
  EXPECT_TRUE(a.grad.row(0).isZero());
  EXPECT_TRUE(a.grad.allFinite());
}

TEST(AutodiffTest, SoftplusIsStableAtExtremes) {
  ad::Tape t;
  Matrix x(3, 1);
  x << -800.0, 0.0, 800.0;
  ad::Var y = ad::softplus(t.constant(x));
  EXPECT_NEAR(y.value()(0, 0), 0.0, 1e-300);
  EXPECT_NEAR(y.value()(1, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(y.value()(2, 0), 800.0, 1e-12);
}

TEST(AutodiffTest, DropoutIsInvertedAndIdentityAtZeroRate) {
  ad::Tape t;
  std::mt19937_64 rng(5);
  ad::Var x = t.constant(Matrix::Ones(200, 50));
  ad::Var same = ad::dropout(x, 0.0, rng);
  EXPECT_EQ(same.id(), x.id());
  ad::Var d = ad::dropout(x, 0.5, rng);
  for (Index i = 0; i < d.value().size(); ++i) {
    const double v = d.value().data()[i];
    EXPECT_TRUE(v == 0.0 || v == 2.0);
  }
  EXPECT_NEAR(d.value().mean(), 1.0, 0.05);
}

TEST(AutodiffTest, ParamNodesAreShared) {
  ad::Tape t;
  Parameter p = makeParam("p", Matrix::Ones(2, 2));
  EXPECT_EQ(t.param(p).id(), t.param(p).id());
  // used twice: gradient accumulates both paths
  t.backward(ad::sumAll(ad::add(t.param(p), t.param(p))));
  EXPECT_TRUE(p.grad.isApprox(Matrix::Constant(2, 2, 2.0)));
}

TEST(AdamTest, FirstStepMovesByLearningRateTimesSign) {
  Parameter g = makeParam("g", Matrix::Zero(1, 2));
  Parameter s = makeParam("s", Matrix::Zero(1, 2));
  s.group = ParamGroup::Semantic;
  AdamConfig cfg;
  Adam adam(cfg, {&g, &s});
  g.grad << 0.5, -2.0;
  s.grad << 3.0, -1e-3;
  adam.step();
  // bias correction makes the first update lr * g / (|g| + eps')
  EXPECT_NEAR(g.value(0, 0), -1e-3, 1e-10);
  EXPECT_NEAR(g.value(0, 1), 1e-3, 1e-10);
  EXPECT_NEAR(s.value(0, 0), -3e-4, 1e-10);
  EXPECT_NEAR(s.value(0, 1), 3e-4, 1e-8);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(AdamTest, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(9);
  Parameter p = makeParam("p", randomMatrix(2, 3, rng));
  AdamConfig cfg;
  Adam adam(cfg, {&p});
  Matrix x = p.value;
  Matrix m = Matrix::Zero(2, 3), v = Matrix::Zero(2, 3);
  for (int step = 1; step <= 5; ++step) {
    const Matrix grad = randomMatrix(2, 3, rng);
    p.grad = grad;
    adam.step();
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1 - std::pow(cfg.beta1, step);
    const double c2 = 1 - std::pow(cfg.beta2, step);
    x.array() -= cfg.generalLearningRate * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + cfg.epsilon);
  }
  EXPECT_LT((p.value - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdamTest, FrozenAndZeroRateParametersStayBitwiseEqual) {
  std::mt19937_64 rng(2);
  Parameter frozen = makeParam("f", randomMatrix(2, 2, rng));
  frozen.frozen = true;
  Parameter idle = makeParam("i", randomMatrix(2, 2, rng));
  const Matrix f0 = frozen.value, i0 = idle.value;
  AdamConfig cfg;
  cfg.generalLearningRate = 0.0;
  Adam adam(cfg, {&frozen, &idle});
  frozen.grad.setOnes();
  idle.grad.setOnes();
  adam.step();
  EXPECT_TRUE((frozen.value.array() == f0.array()).all());
  EXPECT_TRUE((idle.value.array() == i0.array()).all());
}

} // namespace
} // namespace xdrec
