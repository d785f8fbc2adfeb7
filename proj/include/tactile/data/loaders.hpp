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

// Captioned training images from the synthetic shapes or a dataset tree.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tactile/adapters/training.hpp"
#include "tactile/data/manifest.hpp"
#include "tactile/data/synthetic.hpp"
#include "tactile/image_io.hpp"
#include "tactile/prompt/template.hpp"

namespace tactile {

inline const synthetic::ShapeClass& shape_class(std::string_view name) {
  for (const auto& c : synthetic::shape_classes())
    if (c.name == name) return c;
  fail("unknown synthetic class '", name, "'");
}

inline PromptRecord shape_prompt(std::string_view name) {
  const auto& c = shape_class(name);
  return make_prompt_record(c.name, c.features);
}

inline std::vector<CaptionedImage> synthetic_captioned(std::string_view name, int count, int size,
                                                       std::uint64_t seed) {
  const std::string prompt = shape_prompt(name).rendered;
  std::vector<CaptionedImage> out;
  for (auto& img : synthetic::render_class(name, count, size, seed))
    out.push_back({std::move(img), prompt});
  return out;
}

// Source images and captions of one class (or all classes when `only` is
// empty). Every image must be `size` x `size`.
inline std::vector<CaptionedImage> manifest_captioned(const std::filesystem::path& root,
                                                      const Manifest& manifest, int size,
                                                      const std::string& only = "") {
  std::vector<CaptionedImage> out;
  for (const auto& c : manifest.classes) {
    if (!only.empty() && c.class_name != only) continue;
    for (const auto& s : c.source_images) {
      Image img = read_png(root / s.image);
      require(img.height == size && img.width == size, "image '", s.image, "' is ", img.height,
              "x", img.width, ", expected ", size, "x", size);
      out.push_back({std::move(img), read_caption(root, s)});
    }
  }
  require(!out.empty(), only.empty() ? "dataset has no source images"
                                     : "class '" + only + "' is not in the dataset");
  return out;
}

}  // namespace tactile
