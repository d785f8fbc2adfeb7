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

// 8-bit grayscale PNG files. Pixel values map [-1, 1] <-> [0, 255].

#pragma once

#include <png.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "tactile/image.hpp"

namespace tactile {

inline void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.height > 0 && image.width > 0, "cannot write an empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<unsigned char> gray(image.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = to_gray8(image.values[i]);

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  const std::string name = path.string();
  const int ok = png_image_write_to_file(&png, name.c_str(), 0, gray.data(), 0, nullptr);
  const std::string message = png.message;
  png_image_free(&png);
  require(ok != 0, "cannot write PNG '", name, "': ", message);
}

// Colour inputs are reduced to gray by libpng.
inline Image read_png(const std::filesystem::path& path) {
  const std::string name = path.string();
  require(std::filesystem::is_regular_file(path), "image '", name, "' does not exist");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&png, name.c_str()) == 0) {
    const std::string message = png.message;
    png_image_free(&png);
    fail("cannot read PNG '", name, "': ", message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> gray(PNG_IMAGE_SIZE(png));
  if (png_image_finish_read(&png, nullptr, gray.data(), 0, nullptr) == 0) {
    const std::string message = png.message;
    png_image_free(&png);
    fail("cannot decode PNG '", name, "': ", message);
  }
  Image out(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = from_gray8(gray[i]);
  png_image_free(&png);
  return out;
}

}  // namespace tactile
