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
#include <cctype>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tactile/common.hpp"

namespace tactile {

namespace prompt_text {
inline constexpr std::string_view kPrefix = "Create a tactile graphic of ";
inline constexpr std::string_view kMiddle =
    ", specifically designed for individuals with visual impairments. The graphic should "
    "feature raised, smooth lines to delineate the ";
inline constexpr std::string_view kSuffix =
    ", against a simplistic background to ensure stark contrast.";
inline constexpr std::string_view kIdentifier = "tactile";
}  // namespace prompt_text

inline std::string_view indefinite_article(std::string_view noun) {
  if (noun.empty()) return "a";
  switch (std::tolower(static_cast<unsigned char>(noun.front()))) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return "an";
    default:
      return "a";
  }
}

inline std::string join_features(const std::vector<std::string>& features) {
  std::string out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i) out += ", ";
    out += features[i];
  }
  return out;
}

inline std::string render_prompt(std::string_view object_name,
                                 const std::vector<std::string>& features) {
  require(!object_name.empty(), "prompt object name is empty");
  require(!features.empty(), "prompt for '", object_name, "' has no features");
  for (const auto& f : features) require(!f.empty(), "prompt feature is empty");
  std::string out(prompt_text::kPrefix);
  out += indefinite_article(object_name);
  out += ' ';
  out += object_name;
  out += prompt_text::kMiddle;
  out += join_features(features);
  out += prompt_text::kSuffix;
  return out;
}

struct PromptValidation {
  bool ok = false;
  std::size_t deviation = 0;  // offset of the first mismatch when !ok
  std::string reason;
  std::string object_name;
  std::string features;  // raw feature slot
};

namespace detail {

// Offset of the first mismatch between text[pos..] and literal, or npos.
inline std::size_t mismatch_at(std::string_view text, std::size_t pos, std::string_view literal) {
  for (std::size_t i = 0; i < literal.size(); ++i) {
    if (pos + i >= text.size() || text[pos + i] != literal[i]) return pos + i;
  }
  return std::string_view::npos;
}

inline PromptValidation reject(std::size_t at, std::string reason) {
  PromptValidation v;
  v.deviation = at;
  v.reason = std::move(reason);
  return v;
}

}  // namespace detail

// Template grammar:
//   PREFIX ("a " | "an ") OBJECT MIDDLE FEATURES SUFFIX
// OBJECT is non-empty and comma-free; FEATURES is non-empty.
inline PromptValidation validate_prompt(std::string_view text) {
  using namespace prompt_text;
  using detail::mismatch_at;
  constexpr auto npos = std::string_view::npos;

  if (auto at = mismatch_at(text, 0, kPrefix); at != npos)
    return detail::reject(at, "prefix does not match template");
  std::size_t pos = kPrefix.size();
  if (text.substr(pos, 3) == "an ") {
    pos += 3;
  } else if (text.substr(pos, 2) == "a ") {
    pos += 2;
  } else {
    return detail::reject(pos, "expected article 'a' or 'an'");
  }

  const std::size_t object_start = pos;
  const std::size_t comma = text.find(',', object_start);
  if (comma == npos) return detail::reject(text.size(), "object slot is not terminated");
  if (comma == object_start) return detail::reject(object_start, "object slot is empty");
  if (auto at = mismatch_at(text, comma, kMiddle); at != npos)
    return detail::reject(at, "text after object does not match template");

  const std::size_t features_start = comma + kMiddle.size();
  std::size_t suffix_start = npos;
  if (text.size() >= features_start + kSuffix.size() && text.ends_with(kSuffix)) {
    suffix_start = text.size() - kSuffix.size();
  } else {
    // Report against the last place the suffix could have started.
    const std::size_t guess = text.rfind(", against");
    const std::size_t from = guess != npos && guess >= features_start ? guess : text.size();
    auto at = mismatch_at(text, from, kSuffix);
    return detail::reject(at == npos ? from + kSuffix.size() : at,
                          "closing clause does not match template");
  }
  if (suffix_start <= features_start) return detail::reject(features_start, "feature slot is empty");

  PromptValidation v;
  v.ok = true;
  v.object_name = std::string(text.substr(object_start, comma - object_start));
  v.features = std::string(text.substr(features_start, suffix_start - features_start));
  return v;
}

enum class PromptVariant { kOriginal, kParaphrased };

inline std::string_view to_string(PromptVariant v) {
  return v == PromptVariant::kOriginal ? "original" : "paraphrased";
}

struct PromptRecord {
  std::string object_name;
  std::vector<std::string> features;
  std::string rendered;
  PromptVariant variant = PromptVariant::kOriginal;
  std::optional<std::string> paraphrase_text;

  // The text fed to the embedder.
  const std::string& active_text() const {
    return variant == PromptVariant::kParaphrased && paraphrase_text ? *paraphrase_text : rendered;
  }

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

inline PromptRecord make_prompt_record(std::string object_name, std::vector<std::string> features) {
  PromptRecord r;
  r.rendered = render_prompt(object_name, features);
  r.object_name = std::move(object_name);
  r.features = std::move(features);
  return r;
}

inline bool contains_identifier(std::string_view text) {
  return text.find(prompt_text::kIdentifier) != std::string_view::npos;
}

inline PromptRecord register_paraphrase(PromptRecord record, std::string paraphrase) {
  require(contains_identifier(paraphrase), "paraphrase must keep the '", prompt_text::kIdentifier,
          "' subject: \"", paraphrase, "\"");
  if (record.paraphrase_text)
    notice("replacing paraphrase for '" + record.object_name + "'");
  record.paraphrase_text = std::move(paraphrase);
  record.variant = PromptVariant::kParaphrased;
  return record;
}

// Append-only store of prompt records; the latest entry per object wins.
class PromptStore {
 public:
  void upsert(PromptRecord record) {
    std::lock_guard lock(mutex_);
    history_.push_back(std::move(record));
  }

  std::optional<PromptRecord> latest(std::string_view object_name) const {
    std::lock_guard lock(mutex_);
    for (auto it = history_.rbegin(); it != history_.rend(); ++it)
      if (it->object_name == object_name) return *it;
    return std::nullopt;
  }

  std::size_t history_size() const {
    std::lock_guard lock(mutex_);
    return history_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<PromptRecord> history_;
};

}  // namespace tactile
