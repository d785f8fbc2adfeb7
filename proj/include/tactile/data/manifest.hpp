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

// Class-organised dataset trees:
//
//   root/<class>/source/<name>.png + <name>.txt   (caption sidecar)
//   root/<class>/generated/<name>.png
//
// Paths inside a manifest are relative to the root, '/'-separated.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tactile/adapters/serialization.hpp"

namespace tactile {

inline constexpr const char* kManifestFormat = "tactile-manifest/1";

struct SourceImage {
  std::string image;
  std::string caption;
  friend bool operator==(const SourceImage&, const SourceImage&) = default;
};

struct ClassRecord {
  std::string class_name;
  std::vector<SourceImage> source_images;
  std::vector<std::string> generated_images;

  std::int64_t source_count() const { return static_cast<std::int64_t>(source_images.size()); }
  std::int64_t generated_count() const {
    return static_cast<std::int64_t>(generated_images.size());
  }
  friend bool operator==(const ClassRecord&, const ClassRecord&) = default;
};

struct Manifest {
  std::vector<ClassRecord> classes;  // sorted by class_name

  const ClassRecord* find(const std::string& name) const {
    for (const auto& c : classes)
      if (c.class_name == name) return &c;
    return nullptr;
  }
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Sorts classes and checks the record invariants.
inline Manifest make_manifest(std::vector<ClassRecord> classes) {
  std::sort(classes.begin(), classes.end(),
            [](const ClassRecord& a, const ClassRecord& b) { return a.class_name < b.class_name; });
  std::set<std::string> seen;
  for (const auto& c : classes) {
    require(!c.class_name.empty(), "class with empty name");
    require(seen.insert(c.class_name).second, "duplicate class '", c.class_name, "'");
    require(!c.source_images.empty(), "class '", c.class_name, "' has no source images");
    for (const auto& s : c.source_images)
      require(!s.image.empty() && !s.caption.empty(), "class '", c.class_name,
              "' has a source image without caption");
  }
  return Manifest{std::move(classes)};
}

namespace detail {

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string relative(const std::filesystem::path& p, const std::filesystem::path& root) {
  return std::filesystem::relative(p, root).generic_string();
}

}  // namespace detail

inline Manifest ingest(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  require(fs::is_directory(root), "dataset root '", root.string(), "' is not a directory");
  std::vector<ClassRecord> classes;
  for (const auto& class_dir : detail::sorted_entries(root)) {
    if (!fs::is_directory(class_dir)) continue;
    ClassRecord rec;
    rec.class_name = class_dir.filename().string();

    const fs::path source = class_dir / "source";
    require(fs::is_directory(source), "class '", rec.class_name, "' has no source/ directory");
    std::set<std::string> captions_used;
    for (const auto& f : detail::sorted_entries(source)) {
      if (!fs::is_regular_file(f)) continue;
      if (f.extension() == ".txt") continue;
      require(detail::is_image_file(f), "unexpected file '", f.string(), "' under source/");
      fs::path caption = f;
      caption.replace_extension(".txt");
      require(fs::is_regular_file(caption), "image '", f.string(), "' has no caption file");
      require(captions_used.insert(caption.string()).second, "caption '", caption.string(),
              "' is shared by several images");
      rec.source_images.push_back({detail::relative(f, root), detail::relative(caption, root)});
    }
    for (const auto& f : detail::sorted_entries(source)) {
      if (fs::is_regular_file(f) && f.extension() == ".txt")
        require(captions_used.count(f.string()) != 0, "orphan caption '", f.string(), "'");
    }

    const fs::path generated = class_dir / "generated";
    if (fs::is_directory(generated)) {
      for (const auto& f : detail::sorted_entries(generated)) {
        if (!fs::is_regular_file(f)) continue;
        require(f.extension() != ".txt", "caption file '", f.string(),
                "' under generated/ (captions belong to source/ only)");
        require(detail::is_image_file(f), "unexpected file '", f.string(), "' under generated/");
        rec.generated_images.push_back(detail::relative(f, root));
      }
    }
    classes.push_back(std::move(rec));
  }
  require(!classes.empty(), "dataset root '", root.string(), "' contains no class directories");
  return make_manifest(std::move(classes));
}

// ---------------------------------------------------------------------------

struct CountStats {
  std::int64_t total = 0;
  double mean = 0.0;
  double median = 0.0;
  std::int64_t max = 0;
  std::int64_t min = 0;
  friend bool operator==(const CountStats&, const CountStats&) = default;
};

struct ManifestStats {
  std::size_t num_classes = 0;
  CountStats source;
  CountStats generated;
  friend bool operator==(const ManifestStats&, const ManifestStats&) = default;
};

inline CountStats count_stats(std::vector<std::int64_t> counts) {
  require(!counts.empty(), "statistics over an empty list");
  std::sort(counts.begin(), counts.end());
  CountStats s;
  for (auto c : counts) s.total += c;
  s.mean = static_cast<double>(s.total) / static_cast<double>(counts.size());
  const std::size_t n = counts.size();
  s.median = n % 2 == 1 ? static_cast<double>(counts[n / 2])
                        : (static_cast<double>(counts[n / 2 - 1]) + counts[n / 2]) / 2.0;
  s.min = counts.front();
  s.max = counts.back();
  return s;
}

inline ManifestStats compute_stats(const Manifest& manifest) {
  require(!manifest.classes.empty(), "cannot compute statistics of an empty manifest");
  std::vector<std::int64_t> src, gen;
  for (const auto& c : manifest.classes) {
    src.push_back(c.source_count());
    gen.push_back(c.generated_count());
  }
  return {manifest.classes.size(), count_stats(src), count_stats(gen)};
}

struct Discrepancy {
  std::string statistic;  // e.g. "mean"
  std::string kind;       // "source" | "generated"
  double computed = 0.0;
  double claimed = 0.0;
  friend bool operator==(const Discrepancy&, const Discrepancy&) = default;
};

// Means are compared at the one-decimal display precision; every other
// statistic must match exactly.
inline std::vector<Discrepancy> errata_report(const ManifestStats& computed,
                                              const ManifestStats& claimed) {
  std::vector<Discrepancy> out;
  auto check = [&](const char* kind, const CountStats& c, const CountStats& k) {
    auto exact = [&](const char* stat, double a, double b) {
      if (a != b) out.push_back({stat, kind, a, b});
    };
    exact("total", static_cast<double>(c.total), static_cast<double>(k.total));
    if (std::round(c.mean * 10.0) != std::round(k.mean * 10.0))
      out.push_back({"mean", kind, c.mean, k.mean});
    exact("median", c.median, k.median);
    exact("max", static_cast<double>(c.max), static_cast<double>(k.max));
    exact("min", static_cast<double>(c.min), static_cast<double>(k.min));
  };
  check("source", computed.source, claimed.source);
  check("generated", computed.generated, claimed.generated);
  return out;
}

inline std::vector<Discrepancy> errata_report(const Manifest& manifest,
                                              const ManifestStats& claimed) {
  return errata_report(compute_stats(manifest), claimed);
}

// ---------------------------------------------------------------------------

inline Json to_json(const CountStats& s) {
  return Json{{"total", s.total}, {"mean", s.mean}, {"median", s.median}, {"max", s.max},
              {"min", s.min}};
}

inline CountStats count_stats_from_json(const Json& j) {
  CountStats s;
  s.total = j.at("total").get<std::int64_t>();
  s.mean = j.at("mean").get<double>();
  s.median = j.at("median").get<double>();
  s.max = j.at("max").get<std::int64_t>();
  s.min = j.at("min").get<std::int64_t>();
  return s;
}

inline Json to_json(const ManifestStats& s) {
  return Json{{"num_classes", s.num_classes},
              {"source", to_json(s.source)},
              {"generated", to_json(s.generated)}};
}

inline ManifestStats manifest_stats_from_json(const Json& j) {
  try {
    ManifestStats s;
    s.num_classes = j.value("num_classes", std::size_t{0});
    s.source = count_stats_from_json(j.at("source"));
    s.generated = count_stats_from_json(j.at("generated"));
    return s;
  } catch (const Json::exception& e) {
    fail("malformed statistics block: ", e.what());
  }
}

inline Json manifest_to_json(const Manifest& m) {
  Json classes = Json::array();
  for (const auto& c : m.classes) {
    Json src = Json::array();
    for (const auto& s : c.source_images) src.push_back({{"image", s.image}, {"caption", s.caption}});
    classes.push_back(Json{{"class_name", c.class_name},
                           {"source_count", c.source_count()},
                           {"generated_count", c.generated_count()},
                           {"source", std::move(src)},
                           {"generated", c.generated_images}});
  }
  return Json{{"format", kManifestFormat},
              {"classes", std::move(classes)},
              {"stats", to_json(compute_stats(m))}};
}

inline Manifest manifest_from_json(const Json& j) {
  require(j.value("format", "") == kManifestFormat, "not a manifest file (format '",
          j.value("format", ""), "')");
  std::vector<ClassRecord> classes;
  try {
    for (const auto& c : j.at("classes")) {
      ClassRecord rec;
      rec.class_name = c.at("class_name").get<std::string>();
      for (const auto& s : c.at("source"))
        rec.source_images.push_back({s.at("image").get<std::string>(), s.at("caption").get<std::string>()});
      rec.generated_images = c.at("generated").get<std::vector<std::string>>();
      require(c.at("source_count").get<std::int64_t>() == rec.source_count() &&
                  c.at("generated_count").get<std::int64_t>() == rec.generated_count(),
              "class '", rec.class_name, "': counts disagree with listed files");
      classes.push_back(std::move(rec));
    }
  } catch (const Json::exception& e) {
    fail("malformed manifest: ", e.what());
  }
  Manifest m = make_manifest(std::move(classes));
  if (j.contains("stats"))
    require(manifest_stats_from_json(j.at("stats")) == compute_stats(m),
            "manifest statistics block is stale");
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_json_file(path, manifest_to_json(m));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path));
}

// Reads the caption sidecar of a source image.
inline std::string read_caption(const std::filesystem::path& root, const SourceImage& s) {
  std::ifstream in(root / s.caption);
  require(in.good(), "cannot read caption '", (root / s.caption).string(), "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

}  // namespace tactile
