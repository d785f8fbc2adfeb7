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

#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tactile/diffusion/denoiser.hpp"

namespace tactile {

// Low-rank update for one base matrix W (m x n):
//   W_eff = W + (alpha / rank) * A * B,  A: m x rank, B: rank x n.
struct LoraAdapter {
  std::string target_name;
  Matrix A;
  Matrix B;
  int rank = 0;
  double alpha = 0.0;

  double scale() const { return alpha / rank; }
  Eigen::Index rows() const { return A.rows(); }
  Eigen::Index cols() const { return B.cols(); }
  std::size_t trainable_count() const { return static_cast<std::size_t>(A.size() + B.size()); }

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

inline LoraAdapter make_lora_adapter(std::string target_name, Eigen::Index rows, Eigen::Index cols,
                                     int rank, double alpha, std::uint64_t seed) {
  require(rank >= 1, "LoRA rank must be positive, got ", rank);
  require(rank <= std::min(rows, cols), "LoRA rank ", rank, " exceeds min(", rows, ", ", cols,
          ") for '", target_name, "'");
  require(alpha > 0.0, "LoRA alpha must be positive, got ", alpha);
  LoraAdapter a;
  a.target_name = std::move(target_name);
  a.rank = rank;
  a.alpha = alpha;
  a.A.resize(rows, rank);
  Rng rng(derive_seed(seed, fnv1a(a.target_name)));
  for (Eigen::Index i = 0; i < a.A.size(); ++i) a.A.data()[i] = 0.01 * rng.normal();
  a.B = Matrix::Zero(rank, cols);
  return a;
}

inline Matrix effective_weight(const Matrix& W, const LoraAdapter& adapter) {
  require(adapter.A.cols() == adapter.rank && adapter.B.rows() == adapter.rank,
          "adapter '", adapter.target_name, "' has inconsistent rank");
  require(W.rows() == adapter.A.rows() && W.cols() == adapter.B.cols(),
          "adapter '", adapter.target_name, "' is ", adapter.A.rows(), "x", adapter.B.cols(),
          " but weight is ", W.rows(), "x", W.cols());
  return W + adapter.scale() * (adapter.A * adapter.B);
}

struct LoraGradient {
  Matrix A;
  Matrix B;
};

// Chain rule from d/dW_eff to the factors.
inline LoraGradient lora_backward(const LoraAdapter& adapter, const Matrix& grad_effective) {
  const double s = adapter.scale();
  return {s * grad_effective * adapter.B.transpose(), s * adapter.A.transpose() * grad_effective};
}

// A frozen base network plus LoRA adapters keyed by target name. The base is
// shared and never written through this type.
class AdaptedModel {
 public:
  AdaptedModel() = default;

  AdaptedModel(std::shared_ptr<const DenoiserNet> base, std::vector<LoraAdapter> adapters)
      : base_(std::move(base)), adapters_(std::move(adapters)) {
    require(base_ != nullptr, "adapted model needs a base network");
    for (const auto& a : adapters_) {
      require(base_->params().contains(a.target_name), "unknown adapter target '", a.target_name,
              "'");
    }
    refresh();
  }

  const DenoiserNet& base() const { return *base_; }
  std::shared_ptr<const DenoiserNet> base_ptr() const { return base_; }
  const std::vector<LoraAdapter>& adapters() const { return adapters_; }
  bool attached() const { return !adapters_.empty(); }
  int image_size() const { return base_->image_size(); }

  // Applies `fn` to the adapters and recomputes effective weights.
  void update_adapters(const std::function<void(std::vector<LoraAdapter>&)>& fn) {
    fn(adapters_);
    refresh();
  }

  const ParameterSet& effective_parameters() const { return effective_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& a : adapters_) n += a.trainable_count();
    return n;
  }

  Image forward(const Image& xt, int t, std::span<const double> cond,
                DenoiserTrace* trace = nullptr) const {
    return base_->forward_with(effective_, xt, t, cond, trace);
  }

  DenoiserGradients backward(const DenoiserTrace& trace, const Image& grad_out) const {
    return base_->backward_with(effective_, trace, grad_out);
  }

 private:
  void refresh() {
    effective_ = base_->params();
    for (const auto& a : adapters_) {
      Matrix& w = effective_.at(a.target_name);
      w = effective_weight(w, a);
    }
  }

  std::shared_ptr<const DenoiserNet> base_;
  std::vector<LoraAdapter> adapters_;
  ParameterSet effective_;
};

// Every weight matrix (dense maps and conv kernels in out x in*9 form) whose
// smaller dimension admits `rank`.
inline std::vector<std::string> default_lora_targets(const DenoiserNet& net, int rank) {
  std::vector<std::string> out;
  for (const auto& [name, value] : net.params()) {
    if (name.ends_with(".bias")) continue;
    if (std::min(value.rows(), value.cols()) >= rank) out.push_back(name);
  }
  return out;
}

// Creates zero-initialised adapters (B = 0) on each target.
inline AdaptedModel attach_lora(std::shared_ptr<const DenoiserNet> base,
                                const std::vector<std::string>& targets, int rank, double alpha,
                                std::uint64_t seed = 0) {
  require(base != nullptr, "attach_lora needs a base network");
  require(!targets.empty(), "attach_lora needs at least one target");
  std::vector<LoraAdapter> adapters;
  for (const auto& name : targets) {
    require(base->params().contains(name), "unknown LoRA target '", name, "'");
    require(!name.ends_with(".bias"), "LoRA target '", name, "' is not a 2-D weight");
    for (const auto& a : adapters)
      require(a.target_name != name, "duplicate LoRA target '", name, "'");
    const Matrix& w = base->params().at(name);
    adapters.push_back(make_lora_adapter(name, w.rows(), w.cols(), rank, alpha, seed));
  }
  return AdaptedModel(std::move(base), std::move(adapters));
}

// Base network with adapters folded into its weights. `merged` remembers what
// was folded so the operation can be undone.
struct MergedDenoiser {
  DenoiserNet net;
  std::vector<LoraAdapter> merged;

  int image_size() const { return net.image_size(); }
  Image forward(const Image& xt, int t, std::span<const double> cond) const {
    return net.forward(xt, t, cond);
  }
};

inline MergedDenoiser merge(const AdaptedModel& model) {
  require(model.attached(), "nothing to merge: model has no adapters");
  return {DenoiserNet::from_parameters(model.base().config(), model.effective_parameters()),
          model.adapters()};
}

// Folds further adapters into an existing merge target; refuses to fold twice.
inline void merge_into(MergedDenoiser& target, const std::vector<LoraAdapter>& adapters) {
  require(target.merged.empty(), "double merge: network already carries merged adapters");
  require(!adapters.empty(), "nothing to merge");
  for (const auto& a : adapters) {
    Matrix& w = target.net.params().at(a.target_name);
    w = effective_weight(w, a);
  }
  target.merged = adapters;
}

inline DenoiserNet unmerge(const MergedDenoiser& merged) {
  require(!merged.merged.empty(), "unmerge without a merge record");
  DenoiserNet net = merged.net;
  for (const auto& a : merged.merged) {
    Matrix& w = net.params().at(a.target_name);
    w -= a.scale() * (a.A * a.B);
  }
  return net;
}

}  // namespace tactile
