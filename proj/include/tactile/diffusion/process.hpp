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

#include <cmath>
#include <optional>
#include <string_view>

#include "tactile/diffusion/schedule.hpp"
#include "tactile/image.hpp"

namespace tactile {

// Noise added on top of the posterior mean in a reverse step.
enum class SigmaMode {
  kNone,  // deterministic: the mean term only
  kDdpm,  // ancestral: mean + sqrt(beta_t) * z
};

inline std::string_view to_string(SigmaMode mode) {
  return mode == SigmaMode::kNone ? "none" : "ddpm";
}

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Image forward_diffuse(const Image& x0, int t, const Image& eps,
                             const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_diffuse");
  const double abar = schedule.alpha_bar(t);
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  Image out(x0.height, x0.width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

// Inverse of forward_diffuse given the noise estimate.
inline Image predict_x0(const Image& xt, int t, const Image& eps_hat,
                        const NoiseSchedule& schedule) {
  require_same_shape(xt, eps_hat, "predict_x0");
  const double abar = schedule.alpha_bar(t);
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  Image out(xt.height, xt.width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (xt[i] - noise * eps_hat[i]) / signal;
  return out;
}

// One step of the reverse chain:
//   x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)  [+ sigma_t z]
// `z` is required in kDdpm mode for t > 1; the final step (t = 1) never adds
// noise.
inline Image reverse_step(const Image& xt, int t, const Image& eps_hat,
                          const NoiseSchedule& schedule, const Image* z, SigmaMode mode) {
  require(t >= 1, "reverse_step at t = ", t, " has no previous state");
  require_same_shape(xt, eps_hat, "reverse_step");
  const double alpha = schedule.alpha(t);
  const double abar = schedule.alpha_bar(t);
  const double coeff = (1.0 - alpha) / std::sqrt(1.0 - abar);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);

  const bool add_noise = mode == SigmaMode::kDdpm && t > 1;
  if (add_noise) {
    require(z != nullptr, "reverse_step: ddpm mode at t = ", t, " needs a noise image");
    require_same_shape(xt, *z, "reverse_step noise");
  }
  const double sigma = add_noise ? std::sqrt(schedule.beta(t)) : 0.0;

  Image out(xt.height, xt.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (xt[i] - coeff * eps_hat[i]);
    if (add_noise) out[i] += sigma * (*z)[i];
  }
  return out;
}

// Classifier-free guidance: uncond + scale * (cond - uncond). At scale 1 the
// conditional prediction is returned verbatim.
inline Image cfg_combine(const Image& eps_uncond, const Image& eps_cond, double scale) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  if (scale == 1.0) return eps_cond;
  Image out(eps_cond.height, eps_cond.width);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = eps_uncond[i] + scale * (eps_cond[i] - eps_uncond[i]);
  return out;
}

}  // namespace tactile
