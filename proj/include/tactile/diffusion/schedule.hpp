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
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/common.hpp"

namespace tactile {

// Variance schedule of the forward chain. Steps are 1-based: t = 1 is the
// first noising step and t = T the last; beta(t), alpha(t) and alpha_bar(t)
// are only defined for t in [1, T].
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  // Builds the schedule from per-step betas; alpha_bar is the running product.
  static NoiseSchedule from_betas(std::vector<double> betas, std::string id = "custom") {
    require(!betas.empty(), "noise schedule needs at least one step");
    NoiseSchedule s;
    s.id_ = std::move(id);
    s.betas_ = std::move(betas);
    s.alphas_.resize(s.betas_.size());
    s.alpha_bars_.resize(s.betas_.size());
    double running = 1.0;
    for (std::size_t i = 0; i < s.betas_.size(); ++i) {
      const double b = s.betas_[i];
      require(b > 0.0 && b < 1.0, "beta at step ", i + 1, " = ", b, " is outside (0, 1)");
      s.alphas_[i] = 1.0 - b;
      running *= s.alphas_[i];
      s.alpha_bars_[i] = running;
    }
    return s;
  }

  // Sub-chain over the increasing timesteps `steps` (values in [1, T]). The
  // result has one step per entry with alpha_bar copied from this schedule and
  // beta_i = 1 - alpha_bar(steps[i]) / alpha_bar(steps[i-1]), so each reverse
  // step of the sub-chain jumps between consecutive entries.
  NoiseSchedule respaced(std::span<const int> steps) const {
    require(!steps.empty(), "respaced schedule needs at least one step");
    NoiseSchedule s;
    s.id_ = id_ + "/respaced:" + std::to_string(steps.size());
    double prev_bar = 1.0;
    int prev_t = 0;
    for (int t : steps) {
      require(t > prev_t && t <= num_steps(), "respacing steps must be increasing within [1, T]");
      const double bar = alpha_bar(t);
      const double beta = 1.0 - bar / prev_bar;
      require(beta > 0.0 && beta < 1.0, "respaced beta outside (0, 1)");
      s.betas_.push_back(beta);
      s.alphas_.push_back(1.0 - beta);
      s.alpha_bars_.push_back(bar);
      prev_bar = bar;
      prev_t = t;
    }
    return s;
  }

  int num_steps() const { return static_cast<int>(betas_.size()); }
  bool contains(int t) const { return t >= 1 && t <= num_steps(); }

  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return alphas_[index(t)]; }
  double alpha_bar(int t) const { return alpha_bars_[index(t)]; }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  // Short identifier recorded in checkpoints and adapter metadata.
  const std::string& id() const { return id_; }

 private:
  std::size_t index(int t) const {
    require(contains(t), "timestep ", t, " out of range [1, ", num_steps(), "]");
    return static_cast<std::size_t>(t - 1);
  }

  std::string id_;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

inline std::string linear_schedule_id(int num_steps, double beta_start, double beta_end) {
  std::ostringstream oss;
  oss.precision(17);
  oss << "linear:" << num_steps << ':' << beta_start << ':' << beta_end;
  return oss.str();
}

inline NoiseSchedule make_linear_schedule(int num_steps, double beta_start, double beta_end) {
  require(num_steps >= 1, "schedule length must be positive, got ", num_steps);
  require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
          "linear schedule needs 0 < beta_start <= beta_end < 1, got ", beta_start, ", ", beta_end);
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  for (int i = 0; i < num_steps; ++i) {
    const double frac = num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule::from_betas(std::move(betas),
                                   linear_schedule_id(num_steps, beta_start, beta_end));
}

// Full-fidelity and fast profiles.
inline NoiseSchedule default_schedule() { return make_linear_schedule(1000, 1e-4, 0.02); }
inline NoiseSchedule fast_schedule() { return make_linear_schedule(50, 1e-4, 0.02); }

// Parses an id produced by linear_schedule_id back into a schedule.
inline NoiseSchedule schedule_from_id(const std::string& id) {
  std::istringstream in(id);
  std::string kind, steps, start, end;
  std::getline(in, kind, ':');
  std::getline(in, steps, ':');
  std::getline(in, start, ':');
  std::getline(in, end, ':');
  require(kind == "linear" && !end.empty(), "unrecognised schedule id '", id, "'");
  try {
    return make_linear_schedule(std::stoi(steps), std::stod(start), std::stod(end));
  } catch (const std::logic_error&) {
    fail("unrecognised schedule id '", id, "'");
  }
}

}  // namespace tactile
