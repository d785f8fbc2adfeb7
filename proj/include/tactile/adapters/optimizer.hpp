// Copyright 2026 The tactile-gen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>

#include "tactile/common.hpp"

namespace tactile {

enum class OptimizerKind { kSgd, kAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;  // decoupled; AdamW only
};

// Plain SGD or AdamW with a constant learning rate and per-key moment state.
// Keys identify parameter tensors; each key keeps its own step counter so
// sparsely updated tensors (embedding rows) get correct bias correction.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  void step(const std::string& key, Eigen::Ref<Eigen::MatrixXd> param,
            const Eigen::Ref<const Eigen::MatrixXd>& grad, double lr) {
    require(param.rows() == grad.rows() && param.cols() == grad.cols(),
            "optimizer: gradient shape mismatch for '", key, "'");
    if (config_.kind == OptimizerKind::kSgd) {
      param -= lr * grad;
      return;
    }
    auto [it, inserted] = state_.try_emplace(key);
    State& s = it->second;
    if (inserted) {
      s.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
      s.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    }
    ++s.t;
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * grad;
    s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(config_.beta1, s.t);
    const double c2 = 1.0 - std::pow(config_.beta2, s.t);
    if (config_.weight_decay > 0.0) param *= 1.0 - lr * config_.weight_decay;
    param.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + config_.epsilon);
  }

  const OptimizerConfig& config() const { return config_; }

 private:
  struct State {
    Eigen::MatrixXd m, v;
    int t = 0;
  };

  OptimizerConfig config_;
  std::map<std::string, State> state_;
};

}  // namespace tactile
