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

#include <xdrec/sequence.h>

#include <cmath>

#include <xdrec/errors.h>
#include <xdrec/representation.h>

namespace xdrec {

namespace {

void setup(Parameter& p, const std::string& name, Index rows, Index cols,
           double scale, std::mt19937_64& rng) {
  p.name = name;
  p.group = ParamGroup::General;
  initUniform(p, rows, cols, scale, rng);
}

void constantInit(Parameter& p, const std::string& name, Index dim,
                  double value) {
  p.name = name;
  p.group = ParamGroup::General;
  p.value = Matrix::Constant(1, dim, value);
  p.zeroGrad();
}

ad::Var maybeDropout(ad::Var x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) {
    return x;
  }
  return ad::dropout(x, rate, *rng);
}

} // namespace

TransformerEncoder TransformerEncoder::init(const std::string& name, Index dim,
                                            std::size_t maxLen, double dropout,
                                            double scale,
                                            std::mt19937_64& rng) {
  TransformerEncoder enc;
  enc.dropout = dropout;
  setup(enc.position, name + "_pos", static_cast<Index>(maxLen), dim, scale,
        rng);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    auto& blk = enc.blocks[b];
    const std::string p = name + "_b" + std::to_string(b) + "_";
    setup(blk.wq, p + "wq", dim, dim, scale, rng);
    setup(blk.wk, p + "wk", dim, dim, scale, rng);
    setup(blk.wv, p + "wv", dim, dim, scale, rng);
    setup(blk.wo, p + "wo", dim, dim, scale, rng);
    setup(blk.ff1W, p + "ff1_w", dim, dim, scale, rng);
    setup(blk.ff2W, p + "ff2_w", dim, dim, scale, rng);
    constantInit(blk.ff1B, p + "ff1_b", dim, 0.0);
    constantInit(blk.ff2B, p + "ff2_b", dim, 0.0);
    constantInit(blk.ln1Gamma, p + "ln1_g", dim, 1.0);
    constantInit(blk.ln1Beta, p + "ln1_b", dim, 0.0);
    constantInit(blk.ln2Gamma, p + "ln2_g", dim, 1.0);
    constantInit(blk.ln2Beta, p + "ln2_b", dim, 0.0);
  }
  return enc;
}

std::vector<Parameter*> TransformerEncoder::parameters() {
  std::vector<Parameter*> out{&position};
  for (auto& b : blocks) {
    for (Parameter* p : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ff1W, &b.ff1B, &b.ff2W,
                         &b.ff2B, &b.ln1Gamma, &b.ln1Beta, &b.ln2Gamma,
                         &b.ln2Beta}) {
      out.push_back(p);
    }
  }
  return out;
}

EncodedSequence encodeSequence(ad::Var table, std::span<const Index> items,
                               TransformerEncoder& encoder,
                               std::mt19937_64* rng) {
  if (items.empty()) {
    throw ShapeError("cannot encode an empty sequence");
  }
  if (items.size() > encoder.maxLen()) {
    items = items.last(encoder.maxLen());
  }
  return encodeInputs(ad::gatherRows(table, items), encoder, rng);
}

EncodedSequence encodeInputs(ad::Var inputs, TransformerEncoder& encoder,
                             std::mt19937_64* rng) {
  const Index n = inputs.rows();
  if (n == 0) {
    throw ShapeError("cannot encode an empty sequence");
  }
  if (static_cast<std::size_t>(n) > encoder.maxLen()) {
    throw ShapeError("sequence longer than the positional table");
  }
  ad::Tape& tape = *inputs.tape();
  const double invSqrtD = 1.0 / std::sqrt(static_cast<double>(inputs.cols()));

  ad::Var x = ad::add(inputs,
                      ad::sliceRows(tape.param(encoder.position), 0, n));
  x = maybeDropout(x, encoder.dropout, rng);
  for (auto& blk : encoder.blocks) {
    ad::Var q = ad::matmul(x, tape.param(blk.wq));
    ad::Var k = ad::matmul(x, tape.param(blk.wk));
    ad::Var v = ad::matmul(x, tape.param(blk.wv));
    ad::Var attn =
      ad::softmaxRows(ad::scale(ad::matmulTransB(q, k), invSqrtD), true);
    attn = maybeDropout(attn, encoder.dropout, rng);
    ad::Var out = ad::matmul(ad::matmul(attn, v), tape.param(blk.wo));
    out = maybeDropout(out, encoder.dropout, rng);
    x = ad::layerNorm(ad::add(x, out), tape.param(blk.ln1Gamma),
                      tape.param(blk.ln1Beta), encoder.layerNormEps);

    ad::Var h = ad::relu(ad::addRow(ad::matmul(x, tape.param(blk.ff1W)),
                                    tape.param(blk.ff1B)));
    ad::Var f = ad::addRow(ad::matmul(h, tape.param(blk.ff2W)),
                           tape.param(blk.ff2B));
    f = maybeDropout(f, encoder.dropout, rng);
    x = ad::layerNorm(ad::add(x, f), tape.param(blk.ln2Gamma),
                      tape.param(blk.ln2Beta), encoder.layerNormEps);
  }
  return {x, ad::sliceRows(x, n - 1, 1)};
}

CrossAttentionFuser CrossAttentionFuser::init(const std::string& name,
                                              Index dim, double dropout,
                                              double scale,
                                              std::mt19937_64& rng) {
  CrossAttentionFuser f;
  f.dropout = dropout;
  setup(f.wq, name + "_wq", dim, dim, scale, rng);
  setup(f.wk, name + "_wk", dim, dim, scale, rng);
  setup(f.wv, name + "_wv", dim, dim, scale, rng);
  setup(f.wo, name + "_wo", dim, dim, scale, rng);
  return f;
}

std::vector<Parameter*> CrossAttentionFuser::parameters() {
  return {&wq, &wk, &wv, &wo};
}

CrossAttentionResult crossAttentionFuse(ad::Var targetStates,
                                        ad::Var sourceStates,
                                        CrossAttentionFuser& fuser,
                                        std::mt19937_64* rng) {
  if (targetStates.rows() == 0 || sourceStates.rows() == 0) {
    throw ShapeError("cross-attention needs nonempty target and source");
  }
  if (targetStates.cols() != sourceStates.cols()) {
    throw ShapeError("target and source states differ in width");
  }
  ad::Tape& tape = *targetStates.tape();
  const double invSqrtD =
    1.0 / std::sqrt(static_cast<double>(targetStates.cols()));
  ad::Var q = ad::matmul(targetStates, tape.param(fuser.wq));
  ad::Var k = ad::matmul(sourceStates, tape.param(fuser.wk));
  ad::Var v = ad::matmul(sourceStates, tape.param(fuser.wv));
  CrossAttentionResult r;
  r.weights =
    ad::softmaxRows(ad::scale(ad::matmulTransB(q, k), invSqrtD), false);
  ad::Var w = maybeDropout(r.weights, fuser.dropout, rng);
  r.fused = ad::add(targetStates,
                    ad::matmul(ad::matmul(w, v), tape.param(fuser.wo)));
  r.last = ad::sliceRows(r.fused, r.fused.rows() - 1, 1);
  return r;
}

} // namespace xdrec
