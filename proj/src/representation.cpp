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

#include <xdrec/representation.h>

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include <xdrec/errors.h>

namespace xdrec {

void HyperParams::validate() const {
  if (idDim == 0 || innerDim == 0 || agnosticDim == 0 || contrastiveDim == 0 ||
      modelDim == 0 || textDim == 0) {
    throw ConfigError("embedding dimensions must be positive");
  }
  if (idDim != modelDim) {
    // scores are dot products between the sequence state and e_ID
    throw ConfigError("idDim must equal modelDim");
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (maxSeqLen == 0) {
    throw ConfigError("maxSeqLen must be positive");
  }
  if (!(initScale > 0.0)) {
    throw ConfigError("initScale must be positive");
  }
  if (contrastiveCatalogLimit < 2) {
    throw ConfigError("contrastiveCatalogLimit must be at least 2");
  }
}

void initUniform(Parameter& p, Index rows, Index cols, double scale,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  p.value.resize(rows, cols);
  for (Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = dist(rng);
  }
  p.zeroGrad();
}

EmbeddingTables EmbeddingTables::init(const HyperParams& hp,
                                      std::size_t numItems,
                                      std::size_t numUsers,
                                      std::size_t numSubcategories,
                                      ViewSet views, std::mt19937_64& rng) {
  hp.validate();
  const auto I = static_cast<Index>(numItems);
  const auto U = static_cast<Index>(numUsers);
  const auto S = static_cast<Index>(numSubcategories);
  const auto d1 = static_cast<Index>(hp.idDim);
  const auto d2 = static_cast<Index>(hp.innerDim);
  const auto da = static_cast<Index>(hp.agnosticDim);
  const auto dc = static_cast<Index>(hp.contrastiveDim);
  const auto d = static_cast<Index>(hp.modelDim);
  const auto dt = static_cast<Index>(hp.textDim);
  const double s = hp.initScale;

  EmbeddingTables t;
  t.views = views;
  auto setup = [&](Parameter& p, const char* name, ParamGroup g, Index r,
                   Index c) {
    p.name = name;
    p.group = g;
    initUniform(p, r, c, s, rng);
  };
  setup(t.itemId, "item_id", ParamGroup::General, I, d1);
  setup(t.user, "user", ParamGroup::General, U, d);
  setup(t.subcategory, "subcategory", ParamGroup::Semantic, S, da);
  setup(t.innerW, "inner_w", ParamGroup::Semantic, dt, d2);
  setup(t.innerB, "inner_b", ParamGroup::Semantic, 1, d2);
  setup(t.headId, "head_id", ParamGroup::Semantic, d1, dc);
  setup(t.headInner, "head_inner", ParamGroup::Semantic, d2, dc);
  setup(t.headAgnostic, "head_agnostic", ParamGroup::Semantic, da, dc);
  setup(t.composeB, "compose_b", ParamGroup::General, 1, d);
  // drawn last: its shape depends on the views, and every other table should
  // see the same random stream across variants
  const Index in =
    d1 + (views.inner ? d2 : 0) + (views.agnostic ? da : 0);
  setup(t.composeW, "compose_w", ParamGroup::General, in, d);
  t.innerB.value.setZero();
  t.composeB.value.setZero();

  if (idSlotRank(t) != d1) {
    throw ConfigError("composition projection is not injective on e_ID");
  }
  return t;
}

std::vector<Parameter*> EmbeddingTables::parameters() {
  return {&itemId, &user,   &subcategory, &innerW,    &innerB,
          &composeW, &composeB, &headId,  &headInner, &headAgnostic};
}

SparseMatrix agnosticPoolingMatrix(
  const std::vector<ItemSemanticProfile>& profiles, const Taxonomy& taxonomy) {
  const std::size_t K = taxonomy.size();
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    const auto& p = profiles[m];
    if (p.item != static_cast<ItemIndex>(m)) {
      throw ShapeError("profiles must be ordered by unified item index");
    }
    if (p.assignments.size() != K) {
      throw ShapeError("profile " + p.itemId + " does not cover every category");
    }
    for (std::size_t k = 0; k < K; ++k) {
      const auto& labels = p.assignments[k];
      if (labels.empty()) {
        throw ShapeError("profile " + p.itemId + " has an empty category");
      }
      const double w =
        1.0 / (static_cast<double>(K) * static_cast<double>(labels.size()));
      for (const auto& label : labels) {
        const auto idx = taxonomy.labelIndex(k, label);
        if (!idx) {
          throw ShapeError("label '" + label + "' is not in the vocabulary of " +
                           taxonomy.category(k).name);
        }
        triplets.emplace_back(static_cast<int>(m),
                              static_cast<int>(taxonomy.subcategoryRow(k, *idx)),
                              w);
      }
    }
  }
  SparseMatrix P(static_cast<Index>(profiles.size()),
                 static_cast<Index>(taxonomy.numSubcategories()));
  P.setFromTriplets(triplets.begin(), triplets.end());
  P.makeCompressed();
  return P;
}

ItemSemanticInputs buildSemanticInputs(
  const std::vector<ItemSemanticProfile>& profiles, const Taxonomy& taxonomy,
  TextEncoder& encoder) {
  ItemSemanticInputs in;
  in.agnosticPooling = agnosticPoolingMatrix(profiles, taxonomy);
  in.summaries.resize(static_cast<Index>(profiles.size()),
                      static_cast<Index>(encoder.dim()));
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    const RowVector v = encoder.encode(profiles[m].summary);
    if (v.size() != in.summaries.cols()) {
      throw ShapeError("text encoder returned a vector of the wrong size");
    }
    in.summaries.row(static_cast<Index>(m)) = v;
  }
  return in;
}

RowVector agnosticEmbedding(const ItemSemanticProfile& profile,
                            const Taxonomy& taxonomy,
                            const Matrix& subcategoryTable) {
  if (profile.assignments.size() != taxonomy.size()) {
    throw ShapeError("profile does not cover every category");
  }
  RowVector out = RowVector::Zero(subcategoryTable.cols());
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    const auto& labels = profile.assignments[k];
    if (labels.empty()) {
      throw ShapeError("empty label set in category " +
                       taxonomy.category(k).name);
    }
    RowVector mean = RowVector::Zero(subcategoryTable.cols());
    for (const auto& label : labels) {
      const auto idx = taxonomy.labelIndex(k, label);
      if (!idx) {
        throw ShapeError("label '" + label + "' is not in the vocabulary");
      }
      mean += subcategoryTable.row(
        static_cast<Index>(taxonomy.subcategoryRow(k, *idx)));
    }
    out += mean / static_cast<double>(labels.size());
  }
  return out / static_cast<double>(taxonomy.size());
}

RowVector innerSemanticEmbedding(const RowVector& summary, const Matrix& weight,
                                 const RowVector& bias) {
  if (summary.size() != weight.rows() || bias.size() != weight.cols()) {
    throw ConfigError("summary vector has dimension " +
                      std::to_string(summary.size()) +
                      " but the projection expects " +
                      std::to_string(weight.rows()));
  }
  return summary * weight + bias;
}

RowVector composeItemEmbedding(const RowVector& eId, const RowVector& eInner,
                               const RowVector& eAgnostic, const Matrix& weight,
                               const RowVector& bias) {
  RowVector x(eId.size() + eInner.size() + eAgnostic.size());
  x << eId, eInner, eAgnostic;
  if (x.size() != weight.rows() || bias.size() != weight.cols()) {
    throw ShapeError("composition input does not match the projection");
  }
  return x * weight + bias;
}

Index idSlotRank(const EmbeddingTables& tables) {
  const Index d1 = tables.itemId.value.cols();
  const Matrix block = tables.composeW.value.topRows(d1);
  Eigen::FullPivLU<Matrix> lu(block);
  return lu.rank();
}

ItemViews itemViews(ad::Tape& tape, EmbeddingTables& tables,
                    const ItemSemanticInputs& inputs) {
  ItemViews v;
  v.id = tape.param(tables.itemId);
  if (tables.views.inner) {
    if (inputs.summaries.cols() != tables.innerW.value.rows()) {
      throw ConfigError("summary vectors have dimension " +
                        std::to_string(inputs.summaries.cols()) +
                        " but the projection expects " +
                        std::to_string(tables.innerW.value.rows()));
    }
    v.inner = ad::addRow(
      ad::matmul(tape.constant(inputs.summaries), tape.param(tables.innerW)),
      tape.param(tables.innerB));
  }
  if (tables.views.agnostic) {
    v.agnostic =
      ad::spmm(inputs.agnosticPooling, tape.param(tables.subcategory));
  }
  return v;
}

ad::Var composeItems(ad::Tape& tape, EmbeddingTables& tables,
                     const ItemViews& views) {
  std::vector<ad::Var> parts{views.id};
  if (views.inner.valid()) {
    parts.push_back(views.inner);
  }
  if (views.agnostic.valid()) {
    parts.push_back(views.agnostic);
  }
  ad::Var x = parts.size() == 1 ? parts[0] : ad::concatCols(parts);
  return ad::addRow(ad::matmul(x, tape.param(tables.composeW)),
                    tape.param(tables.composeB));
}

ad::Var infonce(ad::Var queries, ad::Var keys, double temperature,
                std::size_t* zeroRows) {
  std::size_t zq = 0;
  std::size_t zk = 0;
  ad::Var q = ad::normalizeRows(queries, 1e-12, &zq);
  ad::Var k = ad::normalizeRows(keys, 1e-12, &zk);
  if (zeroRows) {
    *zeroRows += zq + zk;
  }
  ad::Var logits = ad::scale(ad::matmulTransB(q, k), 1.0 / temperature);
  return ad::diagonalCrossEntropy(logits);
}

InfoNceResult infonceLoss(const Matrix& queries, const Matrix& keys,
                          double temperature) {
  if (queries.rows() != keys.rows() || queries.cols() != keys.cols()) {
    throw ShapeError("InfoNCE queries and keys must have the same shape");
  }
  ad::Tape tape;
  InfoNceResult r;
  r.loss = infonce(tape.constant(queries), tape.constant(keys), temperature,
                   &r.zeroNormRows)
             .scalar();
  return r;
}

namespace {

ad::Var accumulate(ad::Var total, ad::Var term) {
  return total.valid() ? ad::add(total, term) : term;
}

// Contiguous runs of sorted indices become slices; anything else is gathered.
ad::Var selectRows(ad::Var all, std::span<const Index> rows) {
  if (!rows.empty() && rows.back() - rows.front() + 1 ==
                         static_cast<Index>(rows.size())) {
    bool contiguous = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      contiguous &= rows[i] == rows[i - 1] + 1;
    }
    if (contiguous) {
      return ad::sliceRows(all, rows.front(), static_cast<Index>(rows.size()));
    }
  }
  return ad::gatherRows(all, rows);
}

} // namespace

ContrastiveTerms contrastiveRegularizer(
  ad::Tape& tape, EmbeddingTables& tables, const ItemViews& views,
  const std::array<std::vector<ItemIndex>, 2>& domainItems, double temperature,
  std::size_t catalogLimit) {
  if (!views.agnostic.valid()) {
    throw ConfigError("contrastive alignment needs the agnostic view");
  }
  ContrastiveTerms out;
  ad::Var headId = tape.param(tables.headId);
  ad::Var headAgn = tape.param(tables.headAgnostic);
  ad::Var headInn;
  if (views.inner.valid()) {
    headInn = tape.param(tables.headInner);
  }
  const std::size_t block = std::max<std::size_t>(catalogLimit, 2);
  for (const auto& items : domainItems) {
    for (std::size_t begin = 0; begin < items.size(); begin += block) {
      const std::size_t n = std::min(block, items.size() - begin);
      if (n < 2 && begin > 0) {
        // a lone trailing item has no negatives; fold it into nothing
        continue;
      }
      std::span<const Index> rows(items.data() + begin, n);
      ad::Var keys = ad::matmul(selectRows(views.agnostic, rows), headAgn);
      out.idVsAgnostic = accumulate(
        out.idVsAgnostic,
        infonce(ad::matmul(selectRows(views.id, rows), headId), keys,
                temperature, &out.zeroNormRows));
      if (views.inner.valid()) {
        out.innerVsAgnostic = accumulate(
          out.innerVsAgnostic,
          infonce(ad::matmul(selectRows(views.inner, rows), headInn), keys,
                  temperature, &out.zeroNormRows));
      }
    }
  }
  if (!out.idVsAgnostic.valid()) {
    out.idVsAgnostic = tape.constant(Matrix::Zero(1, 1));
  }
  if (views.inner.valid() && !out.innerVsAgnostic.valid()) {
    out.innerVsAgnostic = tape.constant(Matrix::Zero(1, 1));
  }
  return out;
}

} // namespace xdrec
