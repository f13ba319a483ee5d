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

#include <xdrec/model.h>

#include <algorithm>
#include <cctype>
#include <cmath>

#include <xdrec/errors.h>

namespace xdrec {

namespace {

struct AblationInfo {
  Ablation value;
  const char* name;
  const char* key;
};

constexpr AblationInfo kAblations[] = {
  {Ablation::None, "full", "full"},
  {Ablation::NoInnSem, "w/o InnSem", "no_inn_sem"},
  {Ablation::NoDomAgnSem, "w/o DomAgnSem", "no_dom_agn_sem"},
  {Ablation::NoInnDomAgnSem, "w/o InnDomAgnSem", "no_inn_dom_agn_sem"},
  {Ablation::SimpGraph, "SimpGraph", "simp_graph"},
  {Ablation::NoCDBehav, "w/o CDBehav", "no_cd_behav"},
  {Ablation::AvgFusion, "AvgFusion", "avg_fusion"},
  {Ablation::NoConReg, "w/o ConReg", "no_con_reg"},
};

const AblationInfo& info(Ablation a) {
  for (const auto& i : kAblations) {
    if (i.value == a) {
      return i;
    }
  }
  throw ConfigError("unknown ablation");
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

Parameter scalarParam(const char* name, double value) {
  Parameter p;
  p.name = name;
  p.value = Matrix::Constant(1, 1, value);
  p.zeroGrad();
  return p;
}

} // namespace

const std::vector<Ablation>& allAblations() {
  static const std::vector<Ablation> all = [] {
    std::vector<Ablation> v;
    for (const auto& i : kAblations) {
      v.push_back(i.value);
    }
    return v;
  }();
  return all;
}

std::string ablationName(Ablation a) {
  return info(a).name;
}

std::string ablationKey(Ablation a) {
  return info(a).key;
}

Ablation parseAblation(std::string_view name) {
  const std::string n = lower(name);
  if (n.empty() || n == "none") {
    return Ablation::None;
  }
  for (const auto& i : kAblations) {
    if (n == lower(i.name) || n == i.key) {
      return i.value;
    }
  }
  throw ConfigError("unknown ablation '" + std::string(name) + "'");
}

ViewSet viewsFor(Ablation a) {
  switch (a) {
    case Ablation::NoInnSem:
      return {false, true};
    case Ablation::NoDomAgnSem:
      return {true, false};
    case Ablation::NoInnDomAgnSem:
      return {false, false};
    default:
      return {true, true};
  }
}

bool regularizersActive(Ablation a) {
  return a != Ablation::NoConReg && viewsFor(a).agnostic;
}

FusionParams FusionParams::init() {
  FusionParams f;
  f.alpha = scalarParam("fusion_alpha", 1.0 / 3.0);
  f.beta = scalarParam("fusion_beta", 1.0 / 3.0);
  f.gamma = scalarParam("fusion_gamma", 1.0 / 3.0);
  return f;
}

std::vector<Parameter*> FusionParams::parameters() {
  return {&alpha, &beta, &gamma};
}

ModelInputs ModelInputs::build(const Corpus& corpus,
                               const std::vector<ItemSemanticProfile>& profiles,
                               const Taxonomy& taxonomy, TextEncoder& encoder,
                               Ablation ablation, std::size_t window) {
  ModelInputs in;
  in.maps = corpus.maps;
  const auto nItems = corpus.maps.numUnifiedItems();
  if (profiles.size() != nItems) {
    throw ShapeError("expected " + std::to_string(nItems) +
                     " semantic profiles, got " +
                     std::to_string(profiles.size()));
  }
  if (ablation == Ablation::SimpGraph) {
    in.sourceGraph = buildChainGraph(corpus.users, corpus.maps, Domain::Source);
    in.targetGraph = buildChainGraph(corpus.users, corpus.maps, Domain::Target);
  } else {
    in.sourceGraph =
      buildItemGraph(corpus.users, corpus.maps, Domain::Source, window);
    in.targetGraph =
      buildItemGraph(corpus.users, corpus.maps, Domain::Target, window);
    in.mixedGraph = buildBipartiteGraph(corpus.users, corpus.maps);
  }
  const ViewSet views = viewsFor(ablation);
  in.semantics.agnosticPooling = agnosticPoolingMatrix(profiles, taxonomy);
  if (views.inner) {
    in.semantics = buildSemanticInputs(profiles, taxonomy, encoder);
  } else {
    // unused by the forward pass; skip the encoder round trips
    in.semantics.summaries =
      Matrix::Zero(static_cast<Index>(nItems), static_cast<Index>(encoder.dim()));
  }
  const auto offset = corpus.maps.targetOffset();
  for (ItemIndex m = 0; m < static_cast<ItemIndex>(nItems); ++m) {
    in.domainItems[m < offset ? 0 : 1].push_back(m);
  }
  return in;
}

ModelState ModelState::init(const HyperParams& hp, Ablation ablation,
                            const IndexMaps& maps,
                            std::size_t numSubcategories, std::uint64_t seed) {
  hp.validate();
  std::mt19937_64 rng(seed);
  ModelState s;
  s.hyper = hp;
  s.ablation = ablation;
  s.seed = seed;
  const auto d = static_cast<Index>(hp.modelDim);
  const double sc = hp.initScale;
  s.tables = EmbeddingTables::init(hp, maps.numUnifiedItems(), maps.numUsers(),
                                   numSubcategories, viewsFor(ablation), rng);
  s.gcnSource = GCNLayer::init("gcn_s", d, sc, hp.leakySlope, rng);
  s.gcnTarget = GCNLayer::init("gcn_t", d, sc, hp.leakySlope, rng);
  s.gcnMixed = GCNLayer::init("gcn_m", d, sc, hp.leakySlope, rng);
  s.encSource =
    TransformerEncoder::init("enc_s", d, hp.maxSeqLen, hp.dropout, sc, rng);
  s.encTarget =
    TransformerEncoder::init("enc_t", d, hp.maxSeqLen, hp.dropout, sc, rng);
  s.encMixed =
    TransformerEncoder::init("enc_m", d, hp.maxSeqLen, hp.dropout, sc, rng);
  s.cross = CrossAttentionFuser::init("cross", d, hp.dropout, sc, rng);
  s.fusion = FusionParams::init();
  if (ablation == Ablation::AvgFusion) {
    for (Parameter* p : s.fusion.parameters()) {
      p->frozen = true;
    }
  }
  return s;
}

std::vector<Parameter*> ModelState::parameters() {
  std::vector<Parameter*> out = tables.parameters();
  for (GCNLayer* g : {&gcnSource, &gcnTarget, &gcnMixed}) {
    out.push_back(&g->weight);
    out.push_back(&g->bias);
  }
  for (TransformerEncoder* e : {&encSource, &encTarget, &encMixed}) {
    const auto ps = e->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  const auto cs = cross.parameters();
  out.insert(out.end(), cs.begin(), cs.end());
  const auto fs = fusion.parameters();
  out.insert(out.end(), fs.begin(), fs.end());
  return out;
}

std::vector<const Parameter*> ModelState::parameters() const {
  auto ps = const_cast<ModelState*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

Propagated propagate(ad::Tape& tape, ModelState& state,
                     const ModelInputs& inputs) {
  Propagated p;
  p.views = itemViews(tape, state.tables, inputs.semantics);
  p.composed = composeItems(tape, state.tables, p.views);
  const Index nS = static_cast<Index>(inputs.maps.numItems(Domain::Source));
  const Index nT = static_cast<Index>(inputs.maps.numItems(Domain::Target));
  ad::Var hS = gcnPropagate(inputs.sourceGraph,
                            ad::sliceRows(p.composed, 0, nS), state.gcnSource);
  ad::Var hT = gcnPropagate(inputs.targetGraph,
                            ad::sliceRows(p.composed, nS, nT), state.gcnTarget);
  p.enriched = ad::concatRows(std::array{hS, hT});
  if (state.ablation == Ablation::SimpGraph) {
    p.itemMixed = p.composed;
    p.userMixed = tape.param(state.tables.user);
  } else {
    const Index U = state.tables.user.value.rows();
    ad::Var nodes =
      ad::concatRows(std::array{tape.param(state.tables.user), p.composed});
    ad::Var h = gcnPropagate(inputs.mixedGraph, nodes, state.gcnMixed);
    p.userMixed = ad::sliceRows(h, 0, U);
    p.itemMixed = ad::sliceRows(h, U, nS + nT);
  }
  return p;
}

Propagated constantPropagation(ad::Tape& tape, const Propagated& source) {
  auto copy = [&](const ad::Var& v) {
    return v.valid() ? tape.constant(v.value()) : ad::Var{};
  };
  Propagated p;
  p.views = {copy(source.views.id), copy(source.views.inner),
             copy(source.views.agnostic)};
  p.composed = copy(source.composed);
  p.enriched = copy(source.enriched);
  p.itemMixed = copy(source.itemMixed);
  p.userMixed = copy(source.userMixed);
  return p;
}

UserStates userStates(ad::Tape& /*tape*/, ModelState& state,
                      const Propagated& prop, const UserSequenceBundle& bundle,
                      std::size_t horizon, std::span<const std::size_t> points,
                      std::mt19937_64* rng) {
  const auto& target = bundle.target;
  if (horizon < 1 || horizon >= target.size()) {
    throw ShapeError("prediction horizon out of range for user " +
                     std::to_string(bundle.user));
  }
  const std::size_t L = state.hyper.maxSeqLen;

  const std::size_t w0 = horizon > L ? horizon - L : 0;
  std::vector<Index> targetItems(target.begin() + static_cast<long>(w0),
                                 target.begin() + static_cast<long>(horizon));

  const std::size_t mixedEnd = bundle.targetMixedPos[horizon];
  const std::size_t m0 = mixedEnd > L ? mixedEnd - L : 0;
  std::vector<Index> mixedItems;
  mixedItems.reserve(mixedEnd - m0);
  for (std::size_t i = m0; i < mixedEnd; ++i) {
    mixedItems.push_back(bundle.mixed[i].item);
  }

  UserStates out;
  std::vector<Index> tRows;
  std::vector<Index> mRows;
  for (std::size_t k : points) {
    if (k < 1 || k > horizon) {
      throw ShapeError("prediction point outside the encoded prefix");
    }
    const std::size_t mixedState = bundle.targetMixedPos[k] - 1;
    if (k - 1 < w0 || mixedState < m0) {
      continue;
    }
    out.kept.push_back(k);
    tRows.push_back(static_cast<Index>(k - 1 - w0));
    mRows.push_back(static_cast<Index>(mixedState - m0));
  }
  if (out.kept.empty()) {
    return out;
  }

  EncodedSequence zT =
    encodeSequence(prop.enriched, targetItems, state.encTarget, rng);
  ad::Var fused = zT.states;
  if (state.ablation != Ablation::NoCDBehav && !bundle.source.empty()) {
    std::span<const ItemIndex> src(bundle.source);
    EncodedSequence zS =
      encodeSequence(prop.enriched, src, state.encSource, rng);
    fused = crossAttentionFuse(zT.states, zS.states, state.cross, rng).fused;
  }
  EncodedSequence zM =
    encodeSequence(prop.itemMixed, mixedItems, state.encMixed, rng);

  ad::Var zFuse = ad::gatherRows(fused, tRows);
  ad::Var zMix = ad::gatherRows(zM.states, mRows);
  const std::vector<Index> userRows(out.kept.size(),
                                    static_cast<Index>(bundle.user));
  ad::Var hUser = ad::gatherRows(prop.userMixed, userRows);
  out.z = adaptiveFuse(zFuse, zMix, hUser, state.fusion);
  return out;
}

ad::Var adaptiveFuse(ad::Var zFuse, ad::Var zMix, ad::Var hUser,
                     FusionParams& fusion) {
  ad::Tape& tape = *zFuse.tape();
  return ad::add(ad::add(ad::scaleBy(tape.param(fusion.alpha), zFuse),
                         ad::scaleBy(tape.param(fusion.beta), zMix)),
                 ad::scaleBy(tape.param(fusion.gamma), hUser));
}

RowVector adaptiveFuse(const RowVector& zFuse, const RowVector& zMix,
                       const RowVector& hUser, double alpha, double beta,
                       double gamma) {
  if (zFuse.size() != zMix.size() || zFuse.size() != hUser.size()) {
    throw ShapeError("fusion inputs differ in dimension");
  }
  return alpha * zFuse + beta * zMix + gamma * hUser;
}

ad::Var scoringTable(ad::Tape& tape, ModelState& state,
                     const Propagated& prop) {
  return state.scoreEnriched ? prop.enriched : tape.param(state.tables.itemId);
}

double score(const RowVector& z, ItemIndex item, const Matrix& table) {
  if (item < 0 || item >= table.rows()) {
    throw ShapeError("item index " + std::to_string(item) + " out of range");
  }
  if (z.size() != table.cols()) {
    throw ShapeError("user vector and item table differ in dimension");
  }
  return z.dot(table.row(item));
}

std::vector<double> scoreCandidates(const RowVector& z,
                                    std::span<const ItemIndex> items,
                                    const Matrix& table) {
  std::vector<double> out;
  out.reserve(items.size());
  for (ItemIndex m : items) {
    out.push_back(score(z, m, table));
  }
  return out;
}

ad::Var bprLoss(ad::Var positive, ad::Var negative) {
  if (positive.rows() != negative.rows() || positive.cols() != negative.cols() ||
      positive.rows() * positive.cols() == 0) {
    throw ShapeError("BPR needs equally sized, nonempty score lists");
  }
  return ad::meanAll(ad::softplus(ad::sub(negative, positive)));
}

double bprLoss(std::span<const double> positive,
               std::span<const double> negative) {
  if (positive.size() != negative.size() || positive.empty()) {
    throw ShapeError("BPR needs equally sized, nonempty score lists");
  }
  ad::Tape tape;
  Matrix p(static_cast<Index>(positive.size()), 1);
  Matrix n(static_cast<Index>(negative.size()), 1);
  for (std::size_t i = 0; i < positive.size(); ++i) {
    p(static_cast<Index>(i), 0) = positive[i];
    n(static_cast<Index>(i), 0) = negative[i];
  }
  return bprLoss(tape.constant(p), tape.constant(n)).scalar();
}

double totalLoss(double rec, double c1, double c2, double lambda) {
  if (!std::isfinite(rec) || !std::isfinite(c1) || !std::isfinite(c2)) {
    throw DivergenceError("non-finite loss component");
  }
  return rec + lambda * (c1 + c2);
}

Scorer::Scorer(ModelState& state, const ModelInputs& inputs) : state_(state) {
  cached_ = propagate(base_, state, inputs);
  table_ = scoringTable(base_, state, cached_).value();
}

std::optional<RowVector> Scorer::userVector(const UserSequenceBundle& bundle,
                                            std::size_t k) {
  ad::Tape tape;
  const Propagated prop = constantPropagation(tape, cached_);
  const std::size_t point = k;
  UserStates s = userStates(tape, state_, prop, bundle, k,
                            std::span<const std::size_t>(&point, 1));
  if (s.kept.empty()) {
    return std::nullopt;
  }
  return RowVector(s.z.value().row(0));
}

UserStates Scorer::userVectors(const UserSequenceBundle& bundle,
                               std::size_t horizon,
                               std::span<const std::size_t> points,
                               ad::Tape& tape) {
  const Propagated prop = constantPropagation(tape, cached_);
  return userStates(tape, state_, prop, bundle, horizon, points);
}

std::vector<double> forwardUser(ModelState& state, const ModelInputs& inputs,
                                const UserSequenceBundle& bundle, std::size_t k,
                                std::span<const ItemIndex> candidates) {
  Scorer scorer(state, inputs);
  const auto z = scorer.userVector(bundle, k);
  if (!z) {
    throw ShapeError("prediction point outside the sequence window");
  }
  return scorer.scores(*z, candidates);
}

} // namespace xdrec
