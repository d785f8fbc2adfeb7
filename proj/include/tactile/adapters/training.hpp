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
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tactile/adapters/lora.hpp"
#include "tactile/adapters/optimizer.hpp"
#include "tactile/diffusion/process.hpp"
#include "tactile/diffusion/sampler.hpp"
#include "tactile/prompt/embedder.hpp"

namespace tactile {

struct DiffusionExample {
  Image x0;
  Vector cond;
};

// Training image with the prompt it is captioned with.
struct CaptionedImage {
  Image x0;
  std::string prompt;
};

struct NoiseDraw {
  int t = 0;
  Image eps;
};

// Timestep and noise for batch item `index`, independent of batch size.
inline NoiseDraw draw_noise(std::uint64_t seed, std::uint64_t index, int num_steps, int height,
                            int width) {
  Rng rng(derive_seed(seed, index));
  NoiseDraw d;
  d.t = rng.uniform_int(1, num_steps);
  d.eps = gaussian_image(height, width, rng);
  return d;
}

// Mean over the batch of ||eps - eps_hat(x_t, t, cond)||^2.
template <NoisePredictor M>
double ddpm_loss(const M& model, std::span<const DiffusionExample> batch,
                 const NoiseSchedule& schedule, std::uint64_t seed) {
  require(!batch.empty(), "ddpm_loss on an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const NoiseDraw d = draw_noise(seed, i, schedule.num_steps(), ex.x0.height, ex.x0.width);
    const Image xt = forward_diffuse(ex.x0, d.t, d.eps, schedule);
    const Vector& c = ex.cond;
    total += squared_distance(d.eps, model.forward(xt, d.t, std::span<const double>(c.data(), c.size())));
  }
  return total / static_cast<double>(batch.size());
}

inline double dreambooth_loss(double subject_loss, double prior_loss, double prior_weight) {
  require(prior_weight >= 0.0, "prior-preservation weight must be non-negative, got ", prior_weight);
  require(subject_loss >= 0.0 && prior_loss >= 0.0, "losses must be non-negative");
  return subject_loss + prior_weight * prior_loss;
}

struct LossGradients {
  double loss = 0.0;
  ParameterSet weights;        // d loss / d (effective) weights
  std::vector<Vector> conds;   // d loss / d cond, per item
};

// Loss and gradients for a model exposing forward(x, t, cond, trace) and
// backward(trace, grad). Gradients are scaled by `weight`.
template <typename Model>
LossGradients ddpm_loss_gradients(const Model& model, std::span<const DiffusionExample> batch,
                                  const NoiseSchedule& schedule, std::uint64_t seed,
                                  double weight = 1.0) {
  require(!batch.empty(), "ddpm_loss on an empty batch");
  LossGradients out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const NoiseDraw d = draw_noise(seed, i, schedule.num_steps(), ex.x0.height, ex.x0.width);
    const Image xt = forward_diffuse(ex.x0, d.t, d.eps, schedule);
    DenoiserTrace trace;
    const Image pred =
        model.forward(xt, d.t, std::span<const double>(ex.cond.data(), ex.cond.size()), &trace);
    Image grad(pred.height, pred.width);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double r = pred[k] - d.eps[k];
      out.loss += r * r * inv_b;
      grad[k] = 2.0 * r * inv_b * weight;
    }
    DenoiserGradients g = model.backward(trace, grad);
    if (i == 0) {
      out.weights = std::move(g.params);
    } else {
      auto dst = out.weights.begin();
      for (const auto& src : g.params) (dst++)->value += src.value;
    }
    out.conds.push_back(std::move(g.cond));
  }
  return out;
}

inline void accumulate(ParameterSet& into, const ParameterSet& from) {
  auto dst = into.begin();
  for (const auto& src : from) (dst++)->value += src.value;
}

struct TrainingLog {
  std::vector<double> epoch_loss;          // combined objective, mean per step
  std::vector<double> epoch_subject_loss;  // fine-tuning only
  std::vector<double> epoch_prior_loss;    // fine-tuning only
  std::set<std::string> updated;           // keys touched by the optimizer
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Base model training (full parameter updates, fixed text embedder).

struct BaseTrainConfig {
  double lr = 2e-3;
  int batch_size = 6;
  int epochs = 20;
  double cond_dropout = 0.1;  // probability of training on the null condition
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{OptimizerKind::kAdamW, 0.9, 0.999, 1e-8, 0.0};
};

// Condition used for the unconditional branch of guidance.
inline Vector null_condition(int dim) { return Vector::Zero(dim); }

inline TrainingLog train_base(DenoiserNet& net, const Vocabulary& vocab,
                              std::span<const CaptionedImage> data, const NoiseSchedule& schedule,
                              const BaseTrainConfig& config,
                              const std::function<void(int, double)>& on_epoch = {}) {
  require(!data.empty(), "base training set is empty");
  require(config.batch_size >= 1 && config.epochs >= 1, "batch size and epochs must be positive");
  require(config.lr > 0.0, "learning rate must be positive");
  require(schedule.num_steps() <= net.config().num_steps,
          "schedule is longer than the network's time table");

  std::vector<Vector> conds;
  for (const auto& ex : data) conds.push_back(embed_prompt(ex.prompt, vocab));

  Optimizer opt(config.optimizer);
  TrainingLog log;
  std::uint64_t step_counter = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = detail::shuffled_indices(data.size(), derive_seed(config.seed, 1000 + epoch));
    double epoch_total = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::uint64_t step_seed = derive_seed(config.seed, 0x5EED0000ull + step_counter++);
      Rng drop(derive_seed(step_seed, 0xD409));
      std::vector<DiffusionExample> batch;
      for (std::size_t j = start; j < std::min(order.size(), start + config.batch_size); ++j) {
        const std::size_t k = order[j];
        const bool dropped = drop.uniform() < config.cond_dropout;
        batch.push_back({data[k].x0, dropped ? null_condition(vocab.dim()) : conds[k]});
      }
      const LossGradients g = ddpm_loss_gradients(net, batch, schedule, step_seed);
      auto grad = g.weights.begin();
      for (auto& [name, value] : net.params()) {
        opt.step(name, value, (grad++)->value, config.lr);
        log.updated.insert(name);
      }
      epoch_total += g.loss;
      ++steps;
    }
    log.epoch_loss.push_back(epoch_total / steps);
    if (on_epoch) on_epoch(epoch + 1, log.epoch_loss.back());
  }
  return log;
}

// ---------------------------------------------------------------------------
// LoRA / DreamBooth fine-tuning.

struct FinetuneConfig {
  double lr_unet = 1e-4;
  double lr_text = 5e-5;
  int batch_size = 6;
  int epochs = 20;
  int repeats = 10;  // passes over the subject set per epoch
  double prior_weight = 1.0;
  int rank = 32;
  double alpha = 16.0;
  std::uint64_t seed = 0;
  bool train_text = true;  // update embedding rows of the subject prompts
  OptimizerConfig optimizer{};

  void validate() const {
    require(lr_unet > 0.0 && lr_text > 0.0, "learning rates must be positive");
    require(prior_weight >= 0.0, "prior_weight must be non-negative");
    require(batch_size >= 1 && epochs >= 1 && repeats >= 1,
            "batch size, epochs and repeats must be positive");
    require(rank >= 1 && alpha > 0.0, "LoRA rank and alpha must be positive");
  }
};

struct FinetuneResult {
  AdaptedModel model;
  Vocabulary vocab;
  TrainingLog log;
};

inline std::string lora_key(const std::string& target, char which) {
  return "lora:" + target + (which == 'A' ? ".A" : ".B");
}

inline std::string text_row_key(int row) { return "text:row" + std::to_string(row); }

// Updates only adapter factors (lr_unet) and, when enabled, the embedding rows
// used by subject prompts (lr_text). Prior images keep their prompts'
// embeddings fixed. The base network is never written.
inline FinetuneResult finetune(AdaptedModel model, Vocabulary vocab,
                               std::span<const CaptionedImage> subject_set,
                               std::span<const CaptionedImage> prior_set,
                               const NoiseSchedule& schedule, const FinetuneConfig& config,
                               const std::function<void(int, double)>& on_epoch = {}) {
  config.validate();
  require(model.attached(), "finetune needs a model with attached adapters");
  require(!subject_set.empty(), "finetune subject set is empty");
  const bool use_prior = config.prior_weight > 0.0;
  require(!use_prior || !prior_set.empty(),
          "prior_weight > 0 requires a non-empty prior-preservation set");

  std::vector<Vector> prior_conds;
  for (const auto& ex : prior_set) prior_conds.push_back(embed_prompt(ex.prompt, vocab));

  Optimizer opt(config.optimizer);
  TrainingLog log;
  std::uint64_t step_counter = 0;
  std::size_t prior_cursor = 0;
  std::vector<std::size_t> prior_order =
      detail::shuffled_indices(prior_set.size(), derive_seed(config.seed, 0x9F10));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order;
    for (int r = 0; r < config.repeats; ++r) {
      const auto pass = detail::shuffled_indices(
          subject_set.size(), derive_seed(config.seed, 2000 + epoch * 1000 + r));
      order.insert(order.end(), pass.begin(), pass.end());
    }
    double total = 0.0, subject_total = 0.0, prior_total = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::uint64_t step_seed = derive_seed(config.seed, 0xF1E0000ull + step_counter++);
      const std::size_t end = std::min(order.size(), start + config.batch_size);

      std::vector<DiffusionExample> batch;
      std::vector<PromptEmbedding> embeds;
      for (std::size_t j = start; j < end; ++j) {
        const auto& ex = subject_set[order[j]];
        embeds.push_back(embed_prompt_traced(ex.prompt, vocab));
        batch.push_back({ex.x0, embeds.back().vector});
      }
      LossGradients subj = ddpm_loss_gradients(model, batch, schedule, step_seed);
      double prior_loss = 0.0;
      if (use_prior) {
        std::vector<DiffusionExample> prior_batch;
        for (std::size_t j = 0; j < batch.size(); ++j) {
          const std::size_t k = prior_order[prior_cursor++ % prior_order.size()];
          prior_batch.push_back({prior_set[k].x0, prior_conds[k]});
        }
        const LossGradients prior = ddpm_loss_gradients(
            model, prior_batch, schedule, derive_seed(step_seed, 0x9210), config.prior_weight);
        accumulate(subj.weights, prior.weights);
        prior_loss = prior.loss;
      }
      const double loss = dreambooth_loss(subj.loss, prior_loss, config.prior_weight);

      std::vector<LoraGradient> lora_grads;
      for (const auto& a : model.adapters())
        lora_grads.push_back(lora_backward(a, subj.weights.at(a.target_name)));
      model.update_adapters([&](std::vector<LoraAdapter>& adapters) {
        for (std::size_t i = 0; i < adapters.size(); ++i) {
          auto& a = adapters[i];
          opt.step(lora_key(a.target_name, 'A'), a.A, lora_grads[i].A, config.lr_unet);
          opt.step(lora_key(a.target_name, 'B'), a.B, lora_grads[i].B, config.lr_unet);
          log.updated.insert(lora_key(a.target_name, 'A'));
          log.updated.insert(lora_key(a.target_name, 'B'));
        }
      });

      if (config.train_text) {
        std::map<int, Vector> row_grads;
        for (std::size_t j = 0; j < embeds.size(); ++j)
          embedding_backward(embeds[j], subj.conds[j], row_grads);
        for (const auto& [row, grad] : row_grads) {
          Matrix value = vocab.table().row(row);
          opt.step(text_row_key(row), value, grad.transpose(), config.lr_text);
          vocab.table().row(row) = value;
          log.updated.insert(text_row_key(row));
        }
      }

      total += loss;
      subject_total += subj.loss;
      prior_total += prior_loss;
      ++steps;
    }
    log.epoch_loss.push_back(total / steps);
    log.epoch_subject_loss.push_back(subject_total / steps);
    log.epoch_prior_loss.push_back(prior_total / steps);
    if (on_epoch) on_epoch(epoch + 1, log.epoch_loss.back());
  }
  return {std::move(model), std::move(vocab), std::move(log)};
}

// Prior-preservation images: samples from the frozen base under the class
// prompt (the subject prompt with the identifier removed).
template <NoisePredictor M>
std::vector<CaptionedImage> generate_prior_set(const M& base, const Vocabulary& vocab,
                                               const std::string& class_prompt, int count,
                                               const NoiseSchedule& schedule,
                                               SamplerOptions opts) {
  require(count >= 0, "prior sample count must be non-negative");
  const Vector cond = embed_prompt(class_prompt, vocab);
  const Vector uncond = null_condition(vocab.dim());
  std::vector<CaptionedImage> out;
  const std::uint64_t base_seed = opts.seed;
  for (int i = 0; i < count; ++i) {
    opts.seed = base_seed + static_cast<std::uint64_t>(i);
    out.push_back({sample(base, std::span<const double>(cond.data(), cond.size()),
                          std::span<const double>(uncond.data(), uncond.size()), schedule, opts),
                   class_prompt});
  }
  return out;
}

}  // namespace tactile
