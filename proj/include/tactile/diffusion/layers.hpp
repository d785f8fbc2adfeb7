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

// Dense building blocks with hand-written backward passes. Feature maps are
// stored as (channels x pixels) matrices, pixels in row-major order.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tactile/common.hpp"

namespace tactile {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Ordered collection of named matrices (biases are n x 1). Enumeration order is
// insertion order and is part of the serialized format.
class ParameterSet {
 public:
  Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    require(!contains(name), "duplicate parameter '", name, "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Matrix::Zero(rows, cols)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Matrix& at(const std::string& name) { return entries_[slot(name)].value; }
  const Matrix& at(const std::string& name) const { return entries_[slot(name)].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& e : entries_) out.add(e.name, e.value.rows(), e.value.cols());
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.setZero();
  }

  // FNV-1a over the raw bytes of every value, in order.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries_) {
      for (unsigned char c : e.name) h = (h ^ c) * 0x100000001b3ull;
      const auto* bytes = reinterpret_cast<const unsigned char*>(e.value.data());
      const auto n = static_cast<std::size_t>(e.value.size()) * sizeof(double);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ bytes[i]) * 0x100000001b3ull;
    }
    return h;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.value.rows() != y.value.rows() ||
          x.value.cols() != y.value.cols() || x.value != y.value)
        return false;
    }
    return true;
  }

 private:
  std::size_t slot(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '", name, "'");
    return it->second;
  }

  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix silu(const Matrix& pre) {
  return pre.unaryExpr([](double x) { return x * sigmoid(x); });
}

// d silu(x)/dx applied to an upstream gradient.
inline Matrix silu_backward(const Matrix& pre, const Matrix& grad) {
  return grad.binaryExpr(pre, [](double g, double x) {
    const double s = sigmoid(x);
    return g * s * (1.0 + x * (1.0 - s));
  });
}

// 3x3, stride 1, zero padding 1. Row index of the result is c * 9 + ky * 3 + kx.
inline Matrix im2col3x3(const Matrix& in, int height, int width) {
  const auto channels = in.rows();
  Matrix cols = Matrix::Zero(channels * 9, static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            cols(row, y * width + x) = in(c, sy * width + sx);
          }
        }
      }
    }
  }
  return cols;
}

inline Matrix col2im3x3(const Matrix& cols, Eigen::Index channels, int height, int width) {
  Matrix out = Matrix::Zero(channels, static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            out(c, sy * width + sx) += cols(row, y * width + x);
          }
        }
      }
    }
  }
  return out;
}

struct ConvCache {
  Matrix cols;
  int height = 0;
  int width = 0;
};

inline Matrix conv3x3(const Matrix& weight, const Matrix& bias, const Matrix& in, int height,
                      int width, ConvCache* cache) {
  Matrix cols = im2col3x3(in, height, width);
  Matrix out = weight * cols;
  out.colwise() += bias.col(0);
  if (cache) *cache = {std::move(cols), height, width};
  return out;
}

// Accumulates weight/bias gradients and returns the gradient w.r.t. the input.
inline Matrix conv3x3_backward(const Matrix& weight, const ConvCache& cache, const Matrix& grad_out,
                               Matrix& grad_weight, Matrix& grad_bias) {
  grad_weight.noalias() += grad_out * cache.cols.transpose();
  grad_bias.col(0) += grad_out.rowwise().sum();
  const Matrix grad_cols = weight.transpose() * grad_out;
  return col2im3x3(grad_cols, weight.cols() / 9, cache.height, cache.width);
}

inline Matrix avg_pool2(const Matrix& in, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  Matrix out(in.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out(c, y * ow + x) =
            0.25 * (in(c, (2 * y) * width + 2 * x) + in(c, (2 * y) * width + 2 * x + 1) +
                    in(c, (2 * y + 1) * width + 2 * x) + in(c, (2 * y + 1) * width + 2 * x + 1));
  return out;
}

inline Matrix avg_pool2_backward(const Matrix& grad, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  Matrix out = Matrix::Zero(grad.rows(), static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index c = 0; c < grad.rows(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double g = 0.25 * grad(c, y * ow + x);
        out(c, (2 * y) * width + 2 * x) = g;
        out(c, (2 * y) * width + 2 * x + 1) = g;
        out(c, (2 * y + 1) * width + 2 * x) = g;
        out(c, (2 * y + 1) * width + 2 * x + 1) = g;
      }
  return out;
}

// Nearest-neighbour 2x upsampling from (height x width).
inline Matrix upsample2(const Matrix& in, int height, int width) {
  const int ow = width * 2;
  Matrix out(in.rows(), static_cast<Eigen::Index>(height) * 2 * ow);
  for (Eigen::Index c = 0; c < in.rows(); ++c)
    for (int y = 0; y < height * 2; ++y)
      for (int x = 0; x < ow; ++x) out(c, y * ow + x) = in(c, (y / 2) * width + x / 2);
  return out;
}

inline Matrix upsample2_backward(const Matrix& grad, int height, int width) {
  const int ow = width * 2;
  Matrix out = Matrix::Zero(grad.rows(), static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index c = 0; c < grad.rows(); ++c)
    for (int y = 0; y < height * 2; ++y)
      for (int x = 0; x < ow; ++x) out(c, (y / 2) * width + x / 2) += grad(c, y * ow + x);
  return out;
}

}  // namespace nn
}  // namespace tactile
