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
#include <string>
#include <vector>

#include "tactile/diffusion/layers.hpp"
#include "tactile/image.hpp"

namespace tactile {

struct DenoiserConfig {
  int image_size = 32;  // square, divisible by 4
  int cond_dim = 64;
  int emb_dim = 64;
  int num_steps = 1000;  // rows of the time-embedding table
  int level1_channels = 16;
  int level2_channels = 32;
  int level3_channels = 32;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

// Intermediate values retained by a forward pass for the backward pass.
struct DenoiserTrace {
  int t = 0;
  Vector temb, cond;
  Vector time_pre, cond_pre, mixed_in, mix_pre, emb;
  nn::ConvCache conv_in, enc1, enc2, mid_in, mid, dec2, dec1, out;
  Matrix a1_pre, s1_pre, s1, s2_pre, s2, m1_pre, m2_pre, d2_pre, d1_pre;
};

struct DenoiserGradients {
  ParameterSet params;
  Vector cond;  // gradient w.r.t. the condition vector
};

// Three-level convolutional encoder/decoder predicting the noise in x_t. The
// time step enters through a sinusoidal table and the prompt through a
// condition vector; both are mixed into one embedding that adds a per-channel
// shift at every encoder level.
//
// Linear maps (y = W x + b): time_mlp, cond_mlp, emb_mix, emb_out.
// Convolutions are stored as (out x in*9) matrices.
class DenoiserNet {
 public:
  DenoiserNet() = default;

  explicit DenoiserNet(DenoiserConfig config, std::uint64_t seed = 0) : config_(config) {
    validate_config();
    declare();
    init(seed);
  }

  static DenoiserNet from_parameters(DenoiserConfig config, ParameterSet params) {
    DenoiserNet net;
    net.config_ = config;
    net.validate_config();
    net.declare();
    require(params.size() == net.params_.size(), "parameter set does not match architecture");
    for (const auto& [name, value] : params) {
      require(net.params_.contains(name), "unexpected parameter '", name, "'");
      Matrix& dst = net.params_.at(name);
      require(dst.rows() == value.rows() && dst.cols() == value.cols(), "shape mismatch for '",
              name, "'");
      dst = value;
    }
    return net;
  }

  const DenoiserConfig& config() const { return config_; }
  int image_size() const { return config_.image_size; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  static std::vector<std::string> linear_weight_names() {
    return {"time_mlp.weight", "cond_mlp.weight", "emb_mix.weight", "emb_out.weight"};
  }

  Image forward(const Image& xt, int t, std::span<const double> cond,
                DenoiserTrace* trace = nullptr) const {
    return forward_with(params_, xt, t, cond, trace);
  }

  // Forward pass using `weights` in place of the stored parameters (same
  // names and shapes). Used by adapters to run with effective weights.
  Image forward_with(const ParameterSet& weights, const Image& xt, int t,
                     std::span<const double> cond, DenoiserTrace* trace = nullptr) const {
    const int n = config_.image_size;
    require(xt.height == n && xt.width == n, "denoiser expects ", n, "x", n, " input, got ",
            xt.height, "x", xt.width);
    require(t >= 1 && t <= config_.num_steps, "denoiser timestep ", t, " out of range [1, ",
            config_.num_steps, "]");
    require(static_cast<int>(cond.size()) == config_.cond_dim, "condition vector has dimension ",
            cond.size(), ", expected ", config_.cond_dim);

    DenoiserTrace local;
    DenoiserTrace& tr = trace ? *trace : local;
    tr.t = t;
    tr.temb = time_embedding(t);
    tr.cond = Eigen::Map<const Vector>(cond.data(), static_cast<Eigen::Index>(cond.size()));

    const auto& W = weights;
    tr.time_pre = W.at("time_mlp.weight") * tr.temb + W.at("time_mlp.bias").col(0);
    tr.cond_pre = W.at("cond_mlp.weight") * tr.cond + W.at("cond_mlp.bias").col(0);
    tr.mixed_in = nn::silu(tr.time_pre) + nn::silu(tr.cond_pre);
    tr.mix_pre = W.at("emb_mix.weight") * tr.mixed_in + W.at("emb_mix.bias").col(0);
    tr.emb = nn::silu(tr.mix_pre);
    const Vector inject = W.at("emb_out.weight") * tr.emb + W.at("emb_out.bias").col(0);
    const int c1 = config_.level1_channels, c2 = config_.level2_channels,
              c3 = config_.level3_channels;

    const int h1 = n, h2 = n / 2, h3 = n / 4;
    const Matrix x = Eigen::Map<const Matrix>(xt.values.data(), 1, static_cast<Eigen::Index>(xt.size()));

    tr.a1_pre = nn::conv3x3(W.at("enc1.conv_in.weight"), W.at("enc1.conv_in.bias"), x, h1, h1,
                            &tr.conv_in);
    tr.a1_pre.colwise() += inject.segment(0, c1);
    const Matrix a1 = nn::silu(tr.a1_pre);
    tr.s1_pre = nn::conv3x3(W.at("enc1.conv.weight"), W.at("enc1.conv.bias"), a1, h1, h1, &tr.enc1);
    tr.s1 = nn::silu(tr.s1_pre);

    const Matrix p1 = nn::avg_pool2(tr.s1, h1, h1);
    tr.s2_pre = nn::conv3x3(W.at("enc2.conv.weight"), W.at("enc2.conv.bias"), p1, h2, h2, &tr.enc2);
    tr.s2_pre.colwise() += inject.segment(c1, c2);
    tr.s2 = nn::silu(tr.s2_pre);

    const Matrix p2 = nn::avg_pool2(tr.s2, h2, h2);
    tr.m1_pre = nn::conv3x3(W.at("mid.conv_in.weight"), W.at("mid.conv_in.bias"), p2, h3, h3,
                            &tr.mid_in);
    tr.m1_pre.colwise() += inject.segment(c1 + c2, c3);
    const Matrix m1 = nn::silu(tr.m1_pre);
    tr.m2_pre = nn::conv3x3(W.at("mid.conv.weight"), W.at("mid.conv.bias"), m1, h3, h3, &tr.mid);
    const Matrix m2 = nn::silu(tr.m2_pre);

    Matrix cat2(c3 + c2, static_cast<Eigen::Index>(h2) * h2);
    cat2 << nn::upsample2(m2, h3, h3), tr.s2;
    tr.d2_pre = nn::conv3x3(W.at("dec2.conv.weight"), W.at("dec2.conv.bias"), cat2, h2, h2, &tr.dec2);
    const Matrix d2 = nn::silu(tr.d2_pre);

    Matrix cat1(c2 + c1, static_cast<Eigen::Index>(h1) * h1);
    cat1 << nn::upsample2(d2, h2, h2), tr.s1;
    tr.d1_pre = nn::conv3x3(W.at("dec1.conv.weight"), W.at("dec1.conv.bias"), cat1, h1, h1, &tr.dec1);
    const Matrix d1 = nn::silu(tr.d1_pre);

    const Matrix out =
        nn::conv3x3(W.at("out.conv.weight"), W.at("out.conv.bias"), d1, h1, h1, &tr.out);

    Image result(n, n);
    Eigen::Map<Matrix>(result.values.data(), 1, static_cast<Eigen::Index>(result.size())) = out;
    return result;
  }

  // Gradients of <grad_out, forward(...)> w.r.t. `weights` and the condition.
  DenoiserGradients backward_with(const ParameterSet& weights, const DenoiserTrace& tr,
                                  const Image& grad_out) const {
    const int n = config_.image_size;
    require(grad_out.height == n && grad_out.width == n, "gradient shape mismatch");
    const auto& W = weights;
    DenoiserGradients g{W.zeros_like(), Vector::Zero(config_.cond_dim)};
    auto& G = g.params;
    const int c1 = config_.level1_channels, c2 = config_.level2_channels,
              c3 = config_.level3_channels;
    const int h1 = n, h2 = n / 2, h3 = n / 4;

    const Matrix gout =
        Eigen::Map<const Matrix>(grad_out.values.data(), 1, static_cast<Eigen::Index>(grad_out.size()));
    Matrix gd1 = nn::conv3x3_backward(W.at("out.conv.weight"), tr.out, gout,
                                      G.at("out.conv.weight"), G.at("out.conv.bias"));
    gd1 = nn::silu_backward(tr.d1_pre, gd1);
    const Matrix gcat1 = nn::conv3x3_backward(W.at("dec1.conv.weight"), tr.dec1, gd1,
                                              G.at("dec1.conv.weight"), G.at("dec1.conv.bias"));
    Matrix gd2 = nn::upsample2_backward(gcat1.topRows(c2), h2, h2);
    Matrix gs1 = gcat1.bottomRows(c1);

    gd2 = nn::silu_backward(tr.d2_pre, gd2);
    const Matrix gcat2 = nn::conv3x3_backward(W.at("dec2.conv.weight"), tr.dec2, gd2,
                                              G.at("dec2.conv.weight"), G.at("dec2.conv.bias"));
    Matrix gm2 = nn::upsample2_backward(gcat2.topRows(c3), h3, h3);
    Matrix gs2 = gcat2.bottomRows(c2);

    gm2 = nn::silu_backward(tr.m2_pre, gm2);
    Matrix gm1 = nn::conv3x3_backward(W.at("mid.conv.weight"), tr.mid, gm2,
                                      G.at("mid.conv.weight"), G.at("mid.conv.bias"));
    gm1 = nn::silu_backward(tr.m1_pre, gm1);
    Vector ginject(c1 + c2 + c3);
    ginject.segment(c1 + c2, c3) = gm1.rowwise().sum();
    const Matrix gp2 = nn::conv3x3_backward(W.at("mid.conv_in.weight"), tr.mid_in, gm1,
                                            G.at("mid.conv_in.weight"), G.at("mid.conv_in.bias"));
    gs2 += nn::avg_pool2_backward(gp2, h2, h2);

    gs2 = nn::silu_backward(tr.s2_pre, gs2);
    ginject.segment(c1, c2) = gs2.rowwise().sum();
    const Matrix gp1 = nn::conv3x3_backward(W.at("enc2.conv.weight"), tr.enc2, gs2,
                                            G.at("enc2.conv.weight"), G.at("enc2.conv.bias"));
    gs1 += nn::avg_pool2_backward(gp1, h1, h1);

    gs1 = nn::silu_backward(tr.s1_pre, gs1);
    Matrix ga1 = nn::conv3x3_backward(W.at("enc1.conv.weight"), tr.enc1, gs1,
                                      G.at("enc1.conv.weight"), G.at("enc1.conv.bias"));
    ga1 = nn::silu_backward(tr.a1_pre, ga1);
    ginject.segment(0, c1) = ga1.rowwise().sum();
    nn::conv3x3_backward(W.at("enc1.conv_in.weight"), tr.conv_in, ga1,
                         G.at("enc1.conv_in.weight"), G.at("enc1.conv_in.bias"));

    // Embedding path.
    G.at("emb_out.weight").noalias() += ginject * tr.emb.transpose();
    G.at("emb_out.bias").col(0) += ginject;
    const Vector gemb = W.at("emb_out.weight").transpose() * ginject;
    const Vector gmix_pre = nn::silu_backward(tr.mix_pre, gemb);
    G.at("emb_mix.weight").noalias() += gmix_pre * tr.mixed_in.transpose();
    G.at("emb_mix.bias").col(0) += gmix_pre;
    const Vector gmixed = W.at("emb_mix.weight").transpose() * gmix_pre;

    const Vector gtime_pre = nn::silu_backward(tr.time_pre, gmixed);
    G.at("time_mlp.weight").noalias() += gtime_pre * tr.temb.transpose();
    G.at("time_mlp.bias").col(0) += gtime_pre;

    const Vector gcond_pre = nn::silu_backward(tr.cond_pre, gmixed);
    G.at("cond_mlp.weight").noalias() += gcond_pre * tr.cond.transpose();
    G.at("cond_mlp.bias").col(0) += gcond_pre;
    g.cond = W.at("cond_mlp.weight").transpose() * gcond_pre;
    return g;
  }

  DenoiserGradients backward(const DenoiserTrace& trace, const Image& grad_out) const {
    return backward_with(params_, trace, grad_out);
  }

  Vector time_embedding(int t) const {
    const int dim = config_.emb_dim;
    const int half = dim / 2;
    Vector e(dim);
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
      e(i) = std::sin(t * freq);
      e(half + i) = std::cos(t * freq);
    }
    return e;
  }

 private:
  void validate_config() const {
    require(config_.image_size > 0 && config_.image_size % 4 == 0,
            "denoiser image size must be a positive multiple of 4");
    require(config_.emb_dim > 0 && config_.emb_dim % 2 == 0, "embedding dimension must be even");
    require(config_.cond_dim > 0 && config_.num_steps > 0, "invalid denoiser configuration");
    require(config_.level1_channels > 0 && config_.level2_channels > 0 &&
                config_.level3_channels > 0,
            "channel counts must be positive");
  }

  void declare() {
    const int e = config_.emb_dim, c1 = config_.level1_channels, c2 = config_.level2_channels,
              c3 = config_.level3_channels;
    auto linear = [&](const std::string& name, int out, int in) {
      params_.add(name + ".weight", out, in);
      params_.add(name + ".bias", out, 1);
    };
    auto conv = [&](const std::string& name, int out, int in) {
      params_.add(name + ".weight", out, in * 9);
      params_.add(name + ".bias", out, 1);
    };
    linear("time_mlp", e, e);
    linear("cond_mlp", e, config_.cond_dim);
    linear("emb_mix", e, e);
    linear("emb_out", c1 + c2 + c3, e);
    conv("enc1.conv_in", c1, 1);
    conv("enc1.conv", c1, c1);
    conv("enc2.conv", c2, c1);
    conv("mid.conv_in", c3, c2);
    conv("mid.conv", c3, c3);
    conv("dec2.conv", c2, c3 + c2);
    conv("dec1.conv", c1, c2 + c1);
    conv("out.conv", 1, c1);
  }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xD3A0));
    for (auto& [name, value] : params_) {
      if (name.ends_with(".bias")) continue;
      double std_dev = std::sqrt(2.0 / static_cast<double>(value.cols()));
      if (name == "out.conv.weight") std_dev *= 0.1;
      for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = std_dev * rng.normal();
    }
  }

  DenoiserConfig config_;
  ParameterSet params_;
};

}  // namespace tactile
