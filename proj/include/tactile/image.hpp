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
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tactile/common.hpp"

namespace tactile {

// Single-channel image in model space. Pixel values nominally live in
// [-1, 1] (-1 background paper, +1 raised line) but intermediate states of
// the diffusion chain are unbounded.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
    require(h > 0 && w > 0, "image dimensions must be positive, got ", h, "x", w);
  }

  std::size_t size() const { return values.size(); }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  require(a.same_shape(b), what, ": shape mismatch (", a.height, "x", a.width, " vs ", b.height,
          "x", b.width, ")");
}

inline Image gaussian_image(int height, int width, Rng& rng) {
  Image img(height, width);
  for (double& v : img.values) v = rng.normal();
  return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double squared_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "squared_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

// Affine map [-1, 1] -> [0, 255] with round-half-up and clamping.
inline unsigned char to_gray8(double v) {
  const double scaled = std::floor((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5 + 0.5);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

inline double from_gray8(unsigned char g) { return static_cast<double>(g) / 127.5 - 1.0; }

}  // namespace tactile
