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

#include <xdrec/autodiff.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include <xdrec/errors.h>

namespace xdrec::ad {

namespace {

void requireSameTape(Var a, Var b) {
  if (a.tape() != b.tape()) {
    throw ShapeError("autodiff: operands recorded on different tapes");
  }
}

void requireShape(bool ok, const char* what) {
  if (!ok) {
    throw ShapeError(std::string("autodiff: shape mismatch in ") + what);
  }
}

} // namespace

Var Tape::constant(Matrix value) {
  return record(std::move(value), false, nullptr);
}

Var Tape::param(Parameter& p) {
  auto it = paramNodes_.find(&p);
  if (it != paramNodes_.end()) {
    return Var(this, it->second);
  }
  Var v = record(p.value, true, nullptr);
  nodes_[v.id_].param = &p;
  paramNodes_.emplace(&p, v.id_);
  return v;
}

Var Tape::record(Matrix value, bool requiresGrad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requiresGrad = requiresGrad;
  if (requiresGrad) {
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    n.grad.setZero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this || loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("autodiff: backward expects a 1x1 loss on this tape");
  }
  if (!nodes_[loss.id_].requiresGrad) {
    return;
  }
  grad(loss.id_)(0, 0) += 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requiresGrad || n.grad.size() == 0) {
      continue;
    }
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() ||
          n.param->grad.cols() != n.value.cols()) {
        n.param->zeroGrad();
      }
      n.param->grad += n.grad;
    } else if (n.backward) {
      // copy: the closure may touch other nodes' gradients only
      n.backward(*this, n.grad);
    }
  }
}

Var matmul(Var a, Var b) {
  requireSameTape(a, b);
  requireShape(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(),
                  t.requiresGrad(ia) || t.requiresGrad(ib),
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia).noalias() += g * t.value(ib).transpose();
                    }
                    if (t.requiresGrad(ib)) {
                      t.grad(ib).noalias() += t.value(ia).transpose() * g;
                    }
                  });
}

Var matmulTransB(Var a, Var b) {
  requireSameTape(a, b);
  requireShape(a.cols() == b.cols(), "matmulTransB");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value().transpose(),
                  t.requiresGrad(ia) || t.requiresGrad(ib),
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia).noalias() += g * t.value(ib);
                    }
                    if (t.requiresGrad(ib)) {
                      t.grad(ib).noalias() += g.transpose() * t.value(ia);
                    }
                  });
}

Var add(Var a, Var b) {
  requireSameTape(a, b);
  requireShape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(),
                  t.requiresGrad(ia) || t.requiresGrad(ib),
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia) += g;
                    }
                    if (t.requiresGrad(ib)) {
                      t.grad(ib) += g;
                    }
                  });
}

Var sub(Var a, Var b) {
  requireSameTape(a, b);
  requireShape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(),
                  t.requiresGrad(ia) || t.requiresGrad(ib),
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia) += g;
                    }
                    if (t.requiresGrad(ib)) {
                      t.grad(ib) -= g;
                    }
                  });
}

Var addRow(Var a, Var row) {
  requireSameTape(a, row);
  requireShape(row.rows() == 1 && row.cols() == a.cols(), "addRow");
  Tape& t = *a.tape();
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), t.requiresGrad(ia) || t.requiresGrad(ir),
                  [ia, ir](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia) += g;
                    }
                    if (t.requiresGrad(ir)) {
                      t.grad(ir) += g.colwise().sum();
                    }
                  });
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.record(a.value() * factor, t.requiresGrad(ia),
                  [ia, factor](Tape& t, const Matrix& g) {
                    t.grad(ia) += g * factor;
                  });
}

Var scaleBy(Var s, Var a) {
  requireSameTape(s, a);
  requireShape(s.rows() == 1 && s.cols() == 1, "scaleBy");
  Tape& t = *a.tape();
  const int is = s.id(), ia = a.id();
  return t.record(a.value() * s.scalar(),
                  t.requiresGrad(is) || t.requiresGrad(ia),
                  [is, ia](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(is)) {
                      t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
                    }
                    if (t.requiresGrad(ia)) {
                      t.grad(ia) += g * t.value(is)(0, 0);
                    }
                  });
}

Var mulConst(Var a, const Matrix& mask) {
  requireShape(a.rows() == mask.rows() && a.cols() == mask.cols(), "mulConst");
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.record(a.value().cwiseProduct(mask), t.requiresGrad(ia),
                  [ia, mask](Tape& t, const Matrix& g) {
                    t.grad(ia) += g.cwiseProduct(mask);
                  });
}

Var concatCols(std::span<const Var> parts) {
  requireShape(!parts.empty(), "concatCols");
  Tape& t = *parts[0].tape();
  const Index rows = parts[0].rows();
  Index cols = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    requireSameTape(parts[0], p);
    requireShape(p.rows() == rows, "concatCols");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
    needs = needs || t.requiresGrad(p.id());
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleCols(offsets[k], parts[k].cols()) = parts[k].value();
  }
  return t.record(std::move(out), needs,
                  [ids, offsets](Tape& t, const Matrix& g) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (t.requiresGrad(ids[k])) {
                        t.grad(ids[k]) +=
                          g.middleCols(offsets[k], t.value(ids[k]).cols());
                      }
                    }
                  });
}

Var concatRows(std::span<const Var> parts) {
  requireShape(!parts.empty(), "concatRows");
  Tape& t = *parts[0].tape();
  const Index cols = parts[0].cols();
  Index rows = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    requireSameTape(parts[0], p);
    requireShape(p.cols() == cols, "concatRows");
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
    needs = needs || t.requiresGrad(p.id());
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  }
  return t.record(std::move(out), needs,
                  [ids, offsets](Tape& t, const Matrix& g) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (t.requiresGrad(ids[k])) {
                        t.grad(ids[k]) +=
                          g.middleRows(offsets[k], t.value(ids[k]).rows());
                      }
                    }
                  });
}

Var sliceRows(Var a, Index begin, Index count) {
  requireShape(begin >= 0 && count >= 0 && begin + count <= a.rows(),
               "sliceRows");
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.record(a.value().middleRows(begin, count), t.requiresGrad(ia),
                  [ia, begin, count](Tape& t, const Matrix& g) {
                    t.grad(ia).middleRows(begin, count) += g;
                  });
}

Var gatherRows(Var a, std::span<const Index> rows) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Matrix& src = a.value();
  Matrix out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    requireShape(rows[k] >= 0 && rows[k] < src.rows(), "gatherRows");
    out.row(static_cast<Index>(k)) = src.row(rows[k]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return t.record(std::move(out), t.requiresGrad(ia),
                  [ia, idx = std::move(idx)](Tape& t, const Matrix& g) {
                    Matrix& ga = t.grad(ia);
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      ga.row(idx[k]) += g.row(static_cast<Index>(k));
                    }
                  });
}

Var spmm(const SparseMatrix& s, Var a) {
  requireShape(s.cols() == a.rows(), "spmm");
  Tape& t = *a.tape();
  const int ia = a.id();
  const SparseMatrix* sp = &s;
  Matrix out = s * a.value();
  return t.record(std::move(out), t.requiresGrad(ia),
                  [ia, sp](Tape& t, const Matrix& g) {
                    t.grad(ia).noalias() += sp->transpose() * g;
                  });
}

Var leakyRelu(Var a, double slope) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out = a.value().unaryExpr(
    [slope](double x) { return x > 0.0 ? x : slope * x; });
  return t.record(std::move(out), t.requiresGrad(ia),
                  [ia, slope](Tape& t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    Matrix d = x.unaryExpr(
                      [slope](double v) { return v > 0.0 ? 1.0 : slope; });
                    t.grad(ia) += g.cwiseProduct(d);
                  });
}

Var relu(Var a) {
  return leakyRelu(a, 0.0);
}

Var softmaxRows(Var a, bool causal) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Index width = causal ? std::min<Index>(i + 1, x.cols()) : x.cols();
    if (width == 0) {
      continue;
    }
    auto row = x.row(i).head(width);
    const double mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    p.row(i).head(width) = e / e.sum();
  }
  Matrix probs = p;
  return t.record(std::move(p), t.requiresGrad(ia),
                  [ia, probs = std::move(probs)](Tape& t, const Matrix& g) {
                    Matrix d = probs.cwiseProduct(g);
                    Eigen::VectorXd dot = d.rowwise().sum();
                    d -= probs.cwiseProduct(dot.replicate(1, probs.cols()));
                    t.grad(ia) += d;
                  });
}

Var layerNorm(Var a, Var gamma, Var beta, double eps) {
  requireSameTape(a, gamma);
  requireSameTape(a, beta);
  requireShape(gamma.rows() == 1 && gamma.cols() == a.cols() &&
                 beta.rows() == 1 && beta.cols() == a.cols(),
               "layerNorm");
  Tape& t = *a.tape();
  const int ia = a.id(), ig = gamma.id(), ib = beta.id();
  const Matrix& x = a.value();
  const Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd invStd(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    invStd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * invStd(i);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const bool needs =
    t.requiresGrad(ia) || t.requiresGrad(ig) || t.requiresGrad(ib);
  return t.record(
    std::move(out), needs,
    [ia, ig, ib, xhat = std::move(xhat), invStd = std::move(invStd)](
      Tape& t, const Matrix& g) {
      if (t.requiresGrad(ig)) {
        t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
      }
      if (t.requiresGrad(ib)) {
        t.grad(ib) += g.colwise().sum();
      }
      if (t.requiresGrad(ia)) {
        Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
        Matrix& ga = t.grad(ia);
        for (Index i = 0; i < dxhat.rows(); ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
          ga.row(i).array() +=
            invStd(i) *
            (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
      }
    });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) {
    return a;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  const double inv = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = keep(rng) ? inv : 0.0;
  }
  return mulConst(a, mask);
}

Var normalizeRows(Var a, double eps, std::size_t* zeroRows) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  Eigen::VectorXd norms(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    norms(i) = x.row(i).norm();
    if (norms(i) > eps) {
      y.row(i) = x.row(i) / norms(i);
    } else if (zeroRows != nullptr) {
      ++*zeroRows;
    }
  }
  Matrix yc = y;
  return t.record(
    std::move(y), t.requiresGrad(ia),
    [ia, yc = std::move(yc), norms = std::move(norms), eps](Tape& t,
                                                           const Matrix& g) {
      Matrix& ga = t.grad(ia);
      for (Index i = 0; i < g.rows(); ++i) {
        if (norms(i) <= eps) {
          continue;
        }
        const double proj = yc.row(i).dot(g.row(i));
        ga.row(i) += (g.row(i) - proj * yc.row(i)) / norms(i);
      }
    });
}

Var diagonalCrossEntropy(Var s) {
  requireShape(s.rows() == s.cols() && s.rows() > 0, "diagonalCrossEntropy");
  Tape& t = *s.tape();
  const int is = s.id();
  const Matrix& x = s.value();
  Matrix probs(x.rows(), x.cols());
  double loss = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    auto e = (x.row(i).array() - mx).exp();
    const double z = e.sum();
    probs.row(i) = e / z;
    loss += mx + std::log(z) - x(i, i);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  return t.record(std::move(out), t.requiresGrad(is),
                  [is, probs = std::move(probs)](Tape& t, const Matrix& g) {
                    Matrix d = probs;
                    d.diagonal().array() -= 1.0;
                    t.grad(is) += g(0, 0) * d;
                  });
}

Var softplus(Var a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  return t.record(std::move(out), t.requiresGrad(ia),
                  [ia](Tape& t, const Matrix& g) {
                    Matrix sig = t.value(ia).unaryExpr([](double x) {
                      if (x >= 0.0) {
                        return 1.0 / (1.0 + std::exp(-x));
                      }
                      const double e = std::exp(x);
                      return e / (1.0 + e);
                    });
                    t.grad(ia) += g.cwiseProduct(sig);
                  });
}

Var sumAll(Var a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), t.requiresGrad(ia),
                  [ia](Tape& t, const Matrix& g) {
                    t.grad(ia).array() += g(0, 0);
                  });
}

Var meanAll(Var a) {
  requireShape(a.value().size() > 0, "meanAll");
  return scale(sumAll(a), 1.0 / static_cast<double>(a.value().size()));
}

Var rowDot(Var a, Var b) {
  requireSameTape(a, b);
  requireShape(a.rows() == b.rows() && a.cols() == b.cols(), "rowDot");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t.record(std::move(out), t.requiresGrad(ia) || t.requiresGrad(ib),
                  [ia, ib](Tape& t, const Matrix& g) {
                    if (t.requiresGrad(ia)) {
                      t.grad(ia).array() += t.value(ib).array().colwise() *
                                            g.col(0).array();
                    }
                    if (t.requiresGrad(ib)) {
                      t.grad(ib).array() += t.value(ia).array().colwise() *
                                            g.col(0).array();
                    }
                  });
}

} // namespace xdrec::ad
