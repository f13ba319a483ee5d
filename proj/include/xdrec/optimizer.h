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

#pragma once

#include <cstdint>
#include <vector>

#include <xdrec/autodiff.h>

namespace xdrec {

struct AdamConfig {
  double generalLearningRate = 1e-3;
  double semanticLearningRate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent with one learning rate per ParamGroup.
/// Frozen parameters are skipped entirely.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<Parameter*> params);

  void zeroGrad();
  void step();

  std::int64_t steps() const {
    return steps_;
  }
  const std::vector<Matrix>& firstMoments() const {
    return m_;
  }
  const std::vector<Matrix>& secondMoments() const {
    return v_;
  }
  void restore(std::int64_t steps, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  AdamConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t steps_ = 0;
};

} // namespace xdrec
