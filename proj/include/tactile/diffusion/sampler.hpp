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
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tactile/diffusion/process.hpp"

namespace tactile {

// Anything that predicts the noise in x_t: the base network, an adapted
// model, or a test stub.
template <typename M>
concept NoisePredictor = requires(const M& m, const Image& x, int t, std::span<const double> c) {
  { m.forward(x, t, c) } -> std::same_as<Image>;
  { m.image_size() } -> std::convertible_to<int>;
};

struct SamplerOptions {
  int steps = 20;
  double cfg_scale = 7.0;
  SigmaMode sigma_mode = SigmaMode::kDdpm;
  std::uint64_t seed = 0;
  // Called after every reverse iteration with (iteration index counting down
  // to 1, model timestep).
  std::function<void(int, int)> on_step;
};

// Maps a configured sampler name onto a sigma mode. "dpmpp_2m_karras" has no
// implementation here and falls back to the deterministic chain.
inline SigmaMode sigma_mode_for_sampler(const std::string& name) {
  if (name == "ddpm") return SigmaMode::kDdpm;
  if (name == "ddpm_mean") return SigmaMode::kNone;
  if (name == "dpmpp_2m_karras") {
    notice("sampler 'dpmpp_2m_karras' is not implemented; using the deterministic mean-only DDPM chain");
    return SigmaMode::kNone;
  }
  fail("unknown sampler '", name, "' (expected ddpm, ddpm_mean or dpmpp_2m_karras)");
}

// Evenly strided increasing timesteps tau_1 < ... < tau_steps = T.
inline std::vector<int> sampling_timesteps(int num_train_steps, int steps) {
  require(steps >= 1, "sampling needs at least one step");
  require(steps <= num_train_steps, "requested ", steps, " sampling steps but schedule has only ",
          num_train_steps);
  std::vector<int> taus(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i)
    taus[static_cast<std::size_t>(i - 1)] =
        static_cast<int>(static_cast<long long>(i) * num_train_steps / steps);
  return taus;
}

// Number of reverse iterations an img2img run executes.
inline int img2img_iterations(double strength, int steps) {
  require(strength >= 0.0 && strength <= 1.0, "denoising strength ", strength,
          " outside [0, 1]");
  // The 1e-9 guard absorbs representation error such as 0.35 * 20 = 6.9999...
  return std::min(steps, static_cast<int>(std::floor(strength * steps + 1e-9)));
}

namespace detail {

template <NoisePredictor M>
Image guided_eps(const M& model, const Image& x, int t, std::span<const double> cond,
                 std::span<const double> neg_cond, double scale) {
  if (scale == 1.0) return model.forward(x, t, cond);
  return cfg_combine(model.forward(x, t, neg_cond), model.forward(x, t, cond), scale);
}

// Runs reverse iterations from index `start` down to 1 over the sub-chain.
template <NoisePredictor M>
Image run_chain(const M& model, Image x, int start, std::span<const double> cond,
                std::span<const double> neg_cond, const NoiseSchedule& sub,
                const std::vector<int>& taus, const SamplerOptions& opts, Rng& rng) {
  for (int i = start; i >= 1; --i) {
    const int t = taus[static_cast<std::size_t>(i - 1)];
    const Image eps = guided_eps(model, x, t, cond, neg_cond, opts.cfg_scale);
    if (opts.sigma_mode == SigmaMode::kDdpm && i > 1) {
      const Image z = gaussian_image(x.height, x.width, rng);
      x = reverse_step(x, i, eps, sub, &z, opts.sigma_mode);
    } else {
      x = reverse_step(x, i, eps, sub, nullptr, opts.sigma_mode);
    }
    if (opts.on_step) opts.on_step(i, t);
  }
  return x;
}

inline NoiseSchedule sub_chain(const NoiseSchedule& schedule, const std::vector<int>& taus) {
  if (static_cast<int>(taus.size()) == schedule.num_steps()) return schedule;
  return schedule.respaced(taus);
}

}  // namespace detail

// Text-to-image: start from seeded unit noise and walk the strided chain.
template <NoisePredictor M>
Image sample(const M& model, std::span<const double> cond, std::span<const double> neg_cond,
             const NoiseSchedule& schedule, const SamplerOptions& opts) {
  const auto taus = sampling_timesteps(schedule.num_steps(), opts.steps);
  const NoiseSchedule sub = detail::sub_chain(schedule, taus);
  Rng rng(opts.seed);
  const int n = model.image_size();
  Image x = gaussian_image(n, n, rng);
  return detail::run_chain(model, std::move(x), opts.steps, cond, neg_cond, sub, taus, opts, rng);
}

// Image-to-image: noise `init` to tau_k with k = floor(strength * steps) and
// run the last k iterations. At full strength the start is pure noise, which
// makes the run identical to sample() with the same seed.
template <NoisePredictor M>
Image img2img(const M& model, const Image& init, std::span<const double> cond,
              std::span<const double> neg_cond, const NoiseSchedule& schedule, double strength,
              const SamplerOptions& opts) {
  const int n = model.image_size();
  require(init.height == n && init.width == n, "img2img init must be ", n, "x", n);
  require(init.all_finite(), "img2img init has non-finite values");
  const int k = img2img_iterations(strength, opts.steps);
  const auto taus = sampling_timesteps(schedule.num_steps(), opts.steps);
  if (k == 0) return init;
  const NoiseSchedule sub = detail::sub_chain(schedule, taus);
  Rng rng(opts.seed);
  Image eps = gaussian_image(n, n, rng);
  Image x = k == opts.steps
                ? std::move(eps)
                : forward_diffuse(init, taus[static_cast<std::size_t>(k - 1)], eps, schedule);
  return detail::run_chain(model, std::move(x), k, cond, neg_cond, sub, taus, opts, rng);
}

}  // namespace tactile
