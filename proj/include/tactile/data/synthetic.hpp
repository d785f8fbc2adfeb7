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

// Procedural raised-line drawings used as a stand-in training corpus.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "tactile/image.hpp"

namespace tactile::synthetic {

struct ShapeClass {
  std::string name;
  std::vector<std::string> features;
};

inline const std::vector<ShapeClass>& shape_classes() {
  static const std::vector<ShapeClass> classes = {
      {"circle", {"round outline", "smooth curve"}},
      {"square", {"four straight edges", "square corners"}},
      {"cross", {"vertical bar", "horizontal bar"}},
      {"diamond", {"four slanted edges", "pointed tips"}},
      {"triangle", {"three straight edges", "pointed apex"}},
      {"ring", {"outer circle", "inner circle"}},
  };
  return classes;
}

inline bool is_shape_class(std::string_view name) {
  for (const auto& c : shape_classes())
    if (c.name == name) return true;
  return false;
}

namespace detail {

struct Point {
  double x, y;
};

inline double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

inline double polyline_distance(Point p, const std::vector<Point>& pts, bool closed) {
  double best = 1e300;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i + 1 < n + (closed ? 1 : 0); ++i)
    best = std::min(best, segment_distance(p, pts[i], pts[(i + 1) % n]));
  return best;
}

inline std::vector<Point> regular_polygon(Point c, double radius, int sides, double rotation) {
  std::vector<Point> pts;
  for (int i = 0; i < sides; ++i) {
    const double a = rotation + 2.0 * std::numbers::pi * i / sides;
    pts.push_back({c.x + radius * std::cos(a), c.y + radius * std::sin(a)});
  }
  return pts;
}

}  // namespace detail

// Renders one drawing of `class_name` with seeded jitter in position, size and
// rotation. Background is -1, line cores +1, anti-aliased over one pixel.
inline Image render_shape(std::string_view class_name, int size, Rng& rng) {
  using detail::Point;
  require(is_shape_class(class_name), "unknown synthetic shape class '", class_name, "'");
  const double half = size / 2.0;
  const Point c{half + (rng.uniform() - 0.5) * size * 0.15,
                half + (rng.uniform() - 0.5) * size * 0.15};
  const double radius = size * (0.24 + 0.1 * rng.uniform());
  const double rot = (rng.uniform() - 0.5) * 0.5;
  const double width = 0.9 + 0.5 * rng.uniform();

  auto distance = [&](Point p) -> double {
    if (class_name == "circle") {
      return std::abs(std::hypot(p.x - c.x, p.y - c.y) - radius);
    }
    if (class_name == "ring") {
      const double r = std::hypot(p.x - c.x, p.y - c.y);
      return std::min(std::abs(r - radius), std::abs(r - 0.5 * radius));
    }
    if (class_name == "square") {
      return detail::polyline_distance(
          p, detail::regular_polygon(c, radius * std::sqrt(2.0), 4, std::numbers::pi / 4 + rot), true);
    }
    if (class_name == "diamond") {
      return detail::polyline_distance(p, detail::regular_polygon(c, radius * 1.2, 4, rot), true);
    }
    if (class_name == "triangle") {
      return detail::polyline_distance(
          p, detail::regular_polygon(c, radius * 1.2, 3, -std::numbers::pi / 2 + rot), true);
    }
    // cross
    const double ca = std::cos(rot), sa = std::sin(rot);
    const Point h0{c.x - radius * ca, c.y - radius * sa}, h1{c.x + radius * ca, c.y + radius * sa};
    const Point v0{c.x + radius * sa, c.y - radius * ca}, v1{c.x - radius * sa, c.y + radius * ca};
    return std::min(detail::segment_distance(p, h0, h1), detail::segment_distance(p, v0, v1));
  };

  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d = distance({x + 0.5, y + 0.5});
      const double ink = std::clamp(1.0 - (d - width / 2.0), 0.0, 1.0);
      img.at(y, x) = -1.0 + 2.0 * ink;
    }
  }
  return img;
}

inline std::vector<Image> render_class(std::string_view class_name, int count, int size,
                                       std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed ^ fnv1a(class_name), static_cast<std::uint64_t>(i)));
    out.push_back(render_shape(class_name, size, rng));
  }
  return out;
}

}  // namespace tactile::synthetic
