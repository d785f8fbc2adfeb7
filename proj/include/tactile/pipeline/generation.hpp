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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tactile/adapters/serialization.hpp"
#include "tactile/diffusion/sampler.hpp"
#include "tactile/image_io.hpp"
#include "tactile/prompt/embedder.hpp"
#include "tactile/prompt/template.hpp"

namespace tactile {

inline constexpr const char* kRunManifestFormat = "tactile-run/1";

struct GenerationConfig {
  std::string sampler_name = "dpmpp_2m_karras";
  int steps = 20;
  int width = 32;  // 512 at full scale
  int height = 32;
  double cfg_scale = 7.0;
  double denoise_strength = 0.9;  // img2img only
  std::string negative_prompt;
  std::uint64_t seed = 0;
  int batch_size = 8;
  std::string controlnet_meta;  // carried, never interpreted

  void validate() const {
    require(steps >= 1, "steps must be >= 1, got ", steps);
    require(cfg_scale >= 0.0, "cfg_scale must be >= 0, got ", cfg_scale);
    require(denoise_strength >= 0.0 && denoise_strength <= 1.0,
            "denoise_strength must lie in [0, 1], got ", denoise_strength);
    require(width >= 1 && height >= 1, "width and height must be positive");
    require(batch_size >= 1, "batch_size must be >= 1, got ", batch_size);
  }

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

inline Json to_json(const GenerationConfig& c) {
  return Json{{"sampler_name", c.sampler_name},
              {"steps", c.steps},
              {"width", c.width},
              {"height", c.height},
              {"cfg_scale", c.cfg_scale},
              {"denoise_strength", c.denoise_strength},
              {"negative_prompt", c.negative_prompt},
              {"seed", c.seed},
              {"batch_size", c.batch_size},
              {"controlnet_meta", c.controlnet_meta}};
}

// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline GenerationConfig overlay_generation_config(GenerationConfig base, const Json& j) {
  require(j.is_object(), "generation config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "sampler_name") base.sampler_name = value.get<std::string>();
      else if (key == "steps") base.steps = value.get<int>();
      else if (key == "width") base.width = value.get<int>();
      else if (key == "height") base.height = value.get<int>();
      else if (key == "cfg_scale") base.cfg_scale = value.get<double>();
      else if (key == "denoise_strength") base.denoise_strength = value.get<double>();
      else if (key == "negative_prompt") base.negative_prompt = value.get<std::string>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "batch_size") base.batch_size = value.get<int>();
      else if (key == "controlnet_meta") base.controlnet_meta = value.get<std::string>();
      else fail("unknown generation config key '", key, "'");
    }
  } catch (const Json::exception& e) {
    fail("malformed generation config: ", e.what());
  }
  base.validate();
  return base;
}

inline GenerationConfig load_class_config(const std::filesystem::path& path) {
  return overlay_generation_config(GenerationConfig{}, read_json_file(path));
}

// ---------------------------------------------------------------------------

enum class GenerationMode { kText, kImg2Img };

inline std::string_view to_string(GenerationMode m) {
  return m == GenerationMode::kText ? "text" : "img2img";
}

inline GenerationMode parse_generation_mode(std::string_view s) {
  if (s == "text") return GenerationMode::kText;
  if (s == "img2img") return GenerationMode::kImg2Img;
  fail("unknown generation mode '", s, "' (expected text or img2img)");
}

// Everything needed to reproduce a batch bit-for-bit.
struct RunManifest {
  std::string prompt_text;
  PromptVariant prompt_variant = PromptVariant::kOriginal;
  std::string object_name;
  GenerationConfig config;
  GenerationMode mode = GenerationMode::kText;
  std::string adapter_id;
  std::string schedule_id;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> files;
};

inline Json to_json(const RunManifest& m) {
  return Json{{"format", kRunManifestFormat},
              {"object_name", m.object_name},
              {"prompt_text", m.prompt_text},
              {"prompt_variant", to_string(m.prompt_variant)},
              {"mode", to_string(m.mode)},
              {"adapter_id", m.adapter_id},
              {"schedule_id", m.schedule_id},
              {"config", to_json(m.config)},
              {"seeds", m.seeds},
              {"files", m.files}};
}

inline RunManifest run_manifest_from_json(const Json& j) {
  require(j.value("format", "") == kRunManifestFormat, "not a run manifest");
  try {
    RunManifest m;
    m.object_name = j.at("object_name").get<std::string>();
    m.prompt_text = j.at("prompt_text").get<std::string>();
    m.prompt_variant = j.at("prompt_variant").get<std::string>() == "paraphrased"
                           ? PromptVariant::kParaphrased
                           : PromptVariant::kOriginal;
    m.mode = parse_generation_mode(j.at("mode").get<std::string>());
    m.adapter_id = j.at("adapter_id").get<std::string>();
    m.schedule_id = j.at("schedule_id").get<std::string>();
    m.config = overlay_generation_config(GenerationConfig{}, j.at("config"));
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.files = j.at("files").get<std::vector<std::string>>();
    return m;
  } catch (const Json::exception& e) {
    fail("malformed run manifest: ", e.what());
  }
}

struct GenerationResult {
  std::vector<Image> images;
  RunManifest manifest;
};

// Image i uses seed config.seed + i, so larger batches extend smaller ones.
template <NoisePredictor M>
GenerationResult generate_batch(const M& model, const Vocabulary& vocab,
                                const NoiseSchedule& schedule, const PromptRecord& prompt,
                                const GenerationConfig& config, GenerationMode mode,
                                const std::optional<Image>& init = std::nullopt,
                                const std::string& adapter_id = "") {
  config.validate();
  if (mode == GenerationMode::kImg2Img)
    require(init.has_value(), "img2img mode requires an init image");
  else
    require(!init.has_value(), "text mode does not take an init image");
  const int n = model.image_size();
  require(config.width == n && config.height == n, "model generates ", n, "x", n,
          " images but config asks for ", config.width, "x", config.height);
  if (!config.controlnet_meta.empty())
    notice("controlnet_meta is carried as metadata only; ControlNet conditioning is not implemented");

  SamplerOptions opts;
  opts.steps = config.steps;
  opts.cfg_scale = config.cfg_scale;
  opts.sigma_mode = sigma_mode_for_sampler(config.sampler_name);

  const Vector cond = embed_prompt(prompt.active_text(), vocab);
  const Vector neg = config.negative_prompt.empty() ? null_condition(vocab.dim())
                                                    : embed_prompt(config.negative_prompt, vocab);
  const std::span<const double> c(cond.data(), static_cast<std::size_t>(cond.size()));
  const std::span<const double> u(neg.data(), static_cast<std::size_t>(neg.size()));

  GenerationResult out;
  RunManifest& m = out.manifest;
  m.prompt_text = prompt.active_text();
  m.prompt_variant = prompt.variant;
  m.object_name = prompt.object_name;
  m.config = config;
  m.mode = mode;
  m.adapter_id = adapter_id;
  m.schedule_id = schedule.id();
  for (int i = 0; i < config.batch_size; ++i) {
    opts.seed = config.seed + static_cast<std::uint64_t>(i);
    m.seeds.push_back(opts.seed);
    out.images.push_back(mode == GenerationMode::kText
                             ? sample(model, c, u, schedule, opts)
                             : img2img(model, *init, c, u, schedule, config.denoise_strength, opts));
    m.files.push_back(detail::concat("image_", std::setw(3), std::setfill('0'), i, ".png"));
  }
  return out;
}

inline void write_generation(const std::filesystem::path& dir, const GenerationResult& result) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < result.images.size(); ++i)
    write_png(dir / result.manifest.files[i], result.images[i]);
  write_json_file(dir / "run_manifest.json", to_json(result.manifest));
}

// ---------------------------------------------------------------------------

struct PromptEdit {
  enum class Kind { kAddNegative, kDropKeyword };
  Kind kind;
  std::string value;

  static PromptEdit add_negative(std::string token) { return {Kind::kAddNegative, std::move(token)}; }
  static PromptEdit drop_keyword(std::string keyword) {
    return {Kind::kDropKeyword, std::move(keyword)};
  }
};

struct GenerationConfigPatch {
  std::optional<std::string> negative_prompt;

  GenerationConfig apply(GenerationConfig config) const {
    if (negative_prompt) config.negative_prompt = *negative_prompt;
    return config;
  }
};

struct PromptEditResult {
  PromptRecord prompt;
  GenerationConfigPatch patch;
};

// Negative terms accumulate comma-separated. Dropping a keyword removes every
// feature equal to it and re-renders; a registered paraphrase is discarded
// because it may still mention the keyword.
inline PromptEditResult apply_prompt_edit(const PromptRecord& prompt,
                                          const GenerationConfig& config, const PromptEdit& edit) {
  require(!edit.value.empty(), "prompt edit needs a non-empty value");
  PromptEditResult out{prompt, {}};
  if (edit.kind == PromptEdit::Kind::kAddNegative) {
    std::string neg = config.negative_prompt;
    if (!neg.empty()) neg += ", ";
    neg += edit.value;
    out.patch.negative_prompt = std::move(neg);
    return out;
  }
  std::vector<std::string> kept;
  for (const auto& f : prompt.features)
    if (f != edit.value) kept.push_back(f);
  require(kept.size() != prompt.features.size(), "keyword '", edit.value,
          "' is not a feature of the '", prompt.object_name, "' prompt");
  require(!kept.empty(), "cannot drop '", edit.value, "': it is the only feature");
  if (prompt.paraphrase_text) notice("dropping keyword discards the registered paraphrase");
  out.prompt = make_prompt_record(prompt.object_name, std::move(kept));
  const auto check = validate_prompt(out.prompt.rendered);
  require(check.ok, "edited prompt fails validation: ", check.reason);
  return out;
}

// ---------------------------------------------------------------------------
// Human filtering queue: an append-only decision log over generated images.

enum class FilterVerdict { kKeep, kDiscard };
enum class DeciderRole { kNonExpert, kExpert };

inline std::string_view to_string(FilterVerdict v) { return v == FilterVerdict::kKeep ? "keep" : "discard"; }
inline std::string_view to_string(DeciderRole r) {
  return r == DeciderRole::kNonExpert ? "non-expert" : "expert";
}

inline FilterVerdict parse_verdict(std::string_view s) {
  if (s == "keep") return FilterVerdict::kKeep;
  if (s == "discard") return FilterVerdict::kDiscard;
  fail("unknown filter decision '", s, "' (expected keep or discard)");
}

inline DeciderRole parse_role(std::string_view s) {
  if (s == "non-expert") return DeciderRole::kNonExpert;
  if (s == "expert") return DeciderRole::kExpert;
  fail("unknown decider role '", s, "' (expected non-expert or expert)");
}

struct FilterDecision {
  std::string image_id;
  FilterVerdict decision = FilterVerdict::kDiscard;
  DeciderRole role = DeciderRole::kNonExpert;
  std::string timestamp;
  friend bool operator==(const FilterDecision&, const FilterDecision&) = default;
};

struct RetentionStats {
  std::size_t generated = 0;
  std::size_t retained = 0;
  std::optional<double> ratio;  // empty when nothing was generated
};

class FilterQueue {
 public:
  void add_image(const std::string& image_id) {
    require(!image_id.empty(), "image id is empty");
    if (known_.insert(image_id).second) images_.push_back(image_id);
  }

  bool contains(const std::string& image_id) const { return known_.count(image_id) != 0; }
  const std::vector<std::string>& images() const { return images_; }
  const std::vector<FilterDecision>& history() const { return history_; }

  void record(FilterDecision d) {
    require(contains(d.image_id), "unknown image id '", d.image_id, "'");
    latest_[{d.image_id, d.role}] = d.decision;
    history_.push_back(std::move(d));
  }

  // Latest decision for (image, role), if any.
  std::optional<FilterVerdict> decision(const std::string& image_id, DeciderRole role) const {
    auto it = latest_.find({image_id, role});
    if (it == latest_.end()) return std::nullopt;
    return it->second;
  }

  // Images whose latest decision by `role` is keep.
  RetentionStats retention_stats(DeciderRole role = DeciderRole::kNonExpert) const {
    RetentionStats s;
    s.generated = images_.size();
    for (const auto& id : images_)
      if (decision(id, role) == FilterVerdict::kKeep) ++s.retained;
    if (s.generated > 0) s.ratio = static_cast<double>(s.retained) / static_cast<double>(s.generated);
    return s;
  }

 private:
  std::vector<std::string> images_;
  std::set<std::string> known_;
  std::vector<FilterDecision> history_;
  std::map<std::pair<std::string, DeciderRole>, FilterVerdict> latest_;
};

inline FilterQueue filter_record(FilterQueue queue, const std::string& image_id,
                                 FilterVerdict decision, DeciderRole role,
                                 std::string timestamp = "") {
  queue.record({image_id, decision, role, std::move(timestamp)});
  return queue;
}

// Queue persistence: one JSON event per line, either
//   {"event":"image","image_id":...} or
//   {"event":"decision","image_id":...,"decision":...,"role":...,"timestamp":...}
inline std::string filter_event_line(const FilterDecision& d) {
  return Json{{"event", "decision"},
              {"image_id", d.image_id},
              {"decision", to_string(d.decision)},
              {"role", to_string(d.role)},
              {"timestamp", d.timestamp}}
      .dump();
}

inline std::string filter_image_line(const std::string& image_id) {
  return Json{{"event", "image"}, {"image_id", image_id}}.dump();
}

inline FilterQueue replay_filter_log(const std::filesystem::path& path) {
  FilterQueue q;
  if (!std::filesystem::exists(path)) return q;
  std::ifstream in(path);
  require(in.good(), "cannot read filter log '", path.string(), "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception&) {
      // A torn final line from an interrupted write is skipped.
      if (in.peek() == EOF) break;
      fail("filter log '", path.string(), "' line ", lineno, " is not valid JSON");
    }
    const std::string ev = j.value("event", "");
    if (ev == "image") {
      q.add_image(j.at("image_id").get<std::string>());
    } else if (ev == "decision") {
      q.record({j.at("image_id").get<std::string>(),
                parse_verdict(j.at("decision").get<std::string>()),
                parse_role(j.at("role").get<std::string>()), j.value("timestamp", "")});
    } else {
      fail("filter log '", path.string(), "' line ", lineno, ": unknown event '", ev, "'");
    }
  }
  return q;
}

inline void append_line(const std::filesystem::path& path, const std::string& line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  require(out.good(), "cannot append to '", path.string(), "'");
  out << line << '\n';
  out.flush();
  require(out.good(), "failed writing '", path.string(), "'");
}

}  // namespace tactile
