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

#include <xdrec/optimizer.h>

#include <cmath>

#include <xdrec/errors.h>

namespace xdrec {

Adam::Adam(AdamConfig config, std::vector<Parameter*> params)
  : config_(config), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    p->zeroGrad();
  }
}

void Adam::zeroGrad() {
  for (Parameter* p : params_) {
    p->zeroGrad();
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.frozen || p.grad.size() == 0) {
      continue;
    }
    const double lr = p.group == ParamGroup::Semantic
                        ? config_.semanticLearningRate
                        : config_.generalLearningRate;
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
    v_[k] = config_.beta2 * v_[k] +
            (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[k].array() / c1) /
                       ((v_[k].array() / c2).sqrt() + config_.epsilon);
  }
}

void Adam::restore(std::int64_t steps, std::vector<Matrix> m,
                   std::vector<Matrix> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw ShapeError("optimizer state does not match parameter list");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].rows() != params_[k]->value.rows() ||
        m[k].cols() != params_[k]->value.cols() ||
        v[k].rows() != m[k].rows() || v[k].cols() != m[k].cols()) {
      throw ShapeError("optimizer moment shape mismatch for " +
                       params_[k]->name);
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

} // namespace xdrec
