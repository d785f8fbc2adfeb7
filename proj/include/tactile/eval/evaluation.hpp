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

// Blinded paired evaluation: item sets, evaluator sessions, responses and
// percentage reports. The source kind of an item is known only to the server;
// evaluator payloads are built from an explicit allow-list of fields.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/adapters/serialization.hpp"
#include "tactile/data/manifest.hpp"

namespace tactile {

inline constexpr const char* kItemSetFormat = "tactile-item-set/1";

enum class SourceKind { kGenerated, kSourced };

inline std::string_view to_string(SourceKind k) {
  return k == SourceKind::kGenerated ? "generated" : "sourced";
}

inline SourceKind parse_source_kind(std::string_view s) {
  if (s == "generated") return SourceKind::kGenerated;
  if (s == "sourced") return SourceKind::kSourced;
  fail("unknown source kind '", s, "'");
}

enum class Q3 { kAcceptAsIs, kMinorEdits, kMajorEdits, kReject };

inline constexpr std::array<std::string_view, 4> kQ3Values = {"accept_as_is", "minor_edits",
                                                              "major_edits", "reject"};

inline std::string_view to_string(Q3 q) { return kQ3Values[static_cast<std::size_t>(q)]; }

inline Q3 parse_q3(std::string_view s) {
  for (std::size_t i = 0; i < kQ3Values.size(); ++i)
    if (kQ3Values[i] == s) return static_cast<Q3>(i);
  fail("invalid q3 value '", s, "': expected one of accept_as_is, minor_edits, major_edits, reject");
}

// 16 lowercase hex digits.
inline std::string hex_id(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

inline std::string now_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

struct EvaluationItem {
  std::string item_id;
  std::string class_name;
  std::string reference_image;  // natural photograph
  std::string tactile_image;
  SourceKind source_kind = SourceKind::kGenerated;  // server side only
  std::string prompt_variant = "n/a";               // original | paraphrased | n/a

  friend bool operator==(const EvaluationItem&, const EvaluationItem&) = default;
};

struct ItemSet {
  std::string id;
  std::vector<EvaluationItem> items;

  const EvaluationItem* find(const std::string& item_id) const {
    for (const auto& it : items)
      if (it.item_id == item_id) return &it;
    return nullptr;
  }
  friend bool operator==(const ItemSet&, const ItemSet&) = default;
};

// Item ids and image ids are keyed hashes; they carry no path or kind text.
inline std::string opaque_id(const std::string& set_id, const std::string& what) {
  return hex_id(derive_seed(fnv1a(set_id), fnv1a(what)));
}

inline ItemSet make_item_set(std::string id, std::vector<EvaluationItem> items) {
  require(!id.empty(), "item set id is empty");
  std::set<std::string> ids;
  for (auto& it : items) {
    if (it.item_id.empty())
      it.item_id = opaque_id(id, "item|" + it.class_name + "|" + it.tactile_image);
    require(ids.insert(it.item_id).second, "duplicate item id '", it.item_id, "'");
    require(!it.class_name.empty() && !it.reference_image.empty() && !it.tactile_image.empty(),
            "item '", it.item_id, "' is incomplete");
    require(it.prompt_variant == "original" || it.prompt_variant == "paraphrased" ||
                it.prompt_variant == "n/a",
            "item '", it.item_id, "' has unknown prompt variant '", it.prompt_variant, "'");
  }
  return ItemSet{std::move(id), std::move(items)};
}

namespace detail {

inline std::optional<std::filesystem::path> first_image(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  for (const auto& f : sorted_entries(dir))
    if (std::filesystem::is_regular_file(f) && is_image_file(f)) return f;
  return std::nullopt;
}

}  // namespace detail

// One generated and one sourced item per manifest class, both paired with the
// class's natural reference. Each kind directory is laid out <dir>/<class>/;
// the lexicographically first image is used.
inline ItemSet build_item_set(const std::string& set_id, const Manifest& manifest,
                              const std::filesystem::path& refs_dir,
                              const std::filesystem::path& generated_dir,
                              const std::filesystem::path& sourced_dir) {
  std::vector<EvaluationItem> items;
  for (const auto& c : manifest.classes) {
    const auto ref = detail::first_image(refs_dir / c.class_name);
    require(ref.has_value(), "class '", c.class_name, "' has no natural reference image");
    const auto gen = detail::first_image(generated_dir / c.class_name);
    require(gen.has_value(), "class '", c.class_name, "' has no generated sample");
    const auto src = detail::first_image(sourced_dir / c.class_name);
    require(src.has_value(), "class '", c.class_name, "' has no sourced sample");
    items.push_back({"", c.class_name, ref->string(), gen->string(), SourceKind::kGenerated, "n/a"});
    items.push_back({"", c.class_name, ref->string(), src->string(), SourceKind::kSourced, "n/a"});
  }
  require(!items.empty(), "item set would be empty");
  return make_item_set(set_id, std::move(items));
}

inline Json item_set_to_json(const ItemSet& s) {
  Json items = Json::array();
  for (const auto& it : s.items)
    items.push_back(Json{{"item_id", it.item_id},
                         {"class_name", it.class_name},
                         {"reference_image", it.reference_image},
                         {"tactile_image", it.tactile_image},
                         {"source_kind", to_string(it.source_kind)},
                         {"prompt_variant", it.prompt_variant}});
  return Json{{"format", kItemSetFormat}, {"id", s.id}, {"items", std::move(items)}};
}

inline ItemSet item_set_from_json(const Json& j) {
  require(j.value("format", "") == kItemSetFormat, "not an item set file");
  try {
    std::vector<EvaluationItem> items;
    for (const auto& e : j.at("items"))
      items.push_back({e.at("item_id").get<std::string>(), e.at("class_name").get<std::string>(),
                       e.at("reference_image").get<std::string>(),
                       e.at("tactile_image").get<std::string>(),
                       parse_source_kind(e.at("source_kind").get<std::string>()),
                       e.value("prompt_variant", "n/a")});
    return make_item_set(j.at("id").get<std::string>(), std::move(items));
  } catch (const Json::exception& e) {
    fail("malformed item set: ", e.what());
  }
}

inline void save_item_set(const std::filesystem::path& path, const ItemSet& s) {
  write_json_file(path, item_set_to_json(s));
}

inline ItemSet load_item_set(const std::filesystem::path& path) {
  return item_set_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------

struct Response {
  std::string session_id;
  std::string item_id;
  bool q1 = false;
  bool q2 = false;
  Q3 q3 = Q3::kAcceptAsIs;
  std::optional<std::string> q4;
  std::string timestamp;
  friend bool operator==(const Response&, const Response&) = default;
};

// Percentages are held as integer hundredths so rounding is exact.
struct KindReport {
  SourceKind kind = SourceKind::kGenerated;
  int n = 0;
  std::int64_t q1_yes = 0;  // hundredths of a percent
  std::int64_t q2_yes = 0;
  std::array<std::int64_t, 4> q3{};
  friend bool operator==(const KindReport&, const KindReport&) = default;
};

struct AggregateReport {
  std::string set_id;
  std::vector<KindReport> kinds;  // generated before sourced; empty kinds omitted
  const KindReport* find(SourceKind k) const {
    for (const auto& r : kinds)
      if (r.kind == k) return &r;
    return nullptr;
  }
  friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

// 100 * count / n rounded half-up to two decimals, in hundredths.
inline std::int64_t percent_hundredths(std::int64_t count, std::int64_t n) {
  require(n > 0 && count >= 0 && count <= n, "invalid proportion ", count, "/", n);
  return (20000 * count + n) / (2 * n);
}

inline std::string format_hundredths(std::int64_t v) {
  std::ostringstream os;
  os << v / 100 << '.' << (v % 100 < 10 ? "0" : "") << v % 100;
  return os.str();
}

inline std::int64_t parse_hundredths(const std::string& s) {
  const auto dot = s.find('.');
  require(dot != std::string::npos && s.size() - dot == 3, "expected a 2-decimal value, got '", s,
          "'");
  try {
    std::size_t used = 0;
    const long long whole = std::stoll(s.substr(0, dot), &used);
    require(used == dot && whole >= 0, "bad number '", s, "'");
    const long long frac = std::stoll(s.substr(dot + 1), &used);
    require(used == 2 && frac >= 0, "bad number '", s, "'");
    return whole * 100 + frac;
  } catch (const std::logic_error&) {
    fail("bad number '", s, "'");
  }
}

inline AggregateReport aggregate(const ItemSet& set, const std::vector<Response>& responses) {
  AggregateReport report{set.id, {}};
  for (SourceKind kind : {SourceKind::kGenerated, SourceKind::kSourced}) {
    std::int64_t n = 0, q1 = 0, q2 = 0;
    std::array<std::int64_t, 4> q3{};
    for (const auto& r : responses) {
      const EvaluationItem* item = set.find(r.item_id);
      require(item != nullptr, "response for unknown item '", r.item_id, "'");
      if (item->source_kind != kind) continue;
      ++n;
      q1 += r.q1;
      q2 += r.q2;
      ++q3[static_cast<std::size_t>(r.q3)];
    }
    if (n == 0) {
      notice(detail::concat("no responses for kind '", to_string(kind), "'; omitted from report"));
      continue;
    }
    KindReport k{kind, static_cast<int>(n), percent_hundredths(q1, n), percent_hundredths(q2, n), {}};
    for (std::size_t i = 0; i < 4; ++i) k.q3[i] = percent_hundredths(q3[i], n);
    report.kinds.push_back(k);
  }
  return report;
}

enum class ReportFormat { kCsv, kJson };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  fail("unknown report format '", s, "' (expected csv or json)");
}

inline constexpr const char* kReportCsvHeader =
    "set_id,kind,n,q1_yes_pct,q2_yes_pct,q3_accept_as_is_pct,q3_minor_edits_pct,"
    "q3_major_edits_pct,q3_reject_pct";

inline std::string export_report(const AggregateReport& r, ReportFormat format) {
  require(!r.kinds.empty(), "cannot export an empty report");
  if (format == ReportFormat::kCsv) {
    std::string out = std::string(kReportCsvHeader) + "\n";
    for (const auto& k : r.kinds) {
      out += r.set_id + "," + std::string(to_string(k.kind)) + "," + std::to_string(k.n) + "," +
             format_hundredths(k.q1_yes) + "," + format_hundredths(k.q2_yes);
      for (auto v : k.q3) out += "," + format_hundredths(v);
      out += "\n";
    }
    return out;
  }
  Json kinds = Json::array();
  for (const auto& k : r.kinds) {
    Json q3 = Json::object();
    for (std::size_t i = 0; i < 4; ++i) q3[std::string(kQ3Values[i])] = format_hundredths(k.q3[i]);
    kinds.push_back(Json{{"kind", to_string(k.kind)},
                         {"n", k.n},
                         {"q1_yes_pct", format_hundredths(k.q1_yes)},
                         {"q2_yes_pct", format_hundredths(k.q2_yes)},
                         {"q3_pct", std::move(q3)}});
  }
  return Json{{"set_id", r.set_id}, {"kinds", std::move(kinds)}}.dump(1) + "\n";
}

inline AggregateReport import_report(const std::string& text, ReportFormat format) {
  AggregateReport r;
  if (format == ReportFormat::kCsv) {
    std::istringstream in(text);
    std::string line;
    require(std::getline(in, line) && line == kReportCsvHeader, "report CSV header mismatch");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      require(cells.size() == 9, "report CSV row has ", cells.size(), " cells");
      r.set_id = cells[0];
      KindReport k;
      k.kind = parse_source_kind(cells[1]);
      k.n = std::stoi(cells[2]);
      k.q1_yes = parse_hundredths(cells[3]);
      k.q2_yes = parse_hundredths(cells[4]);
      for (std::size_t i = 0; i < 4; ++i) k.q3[i] = parse_hundredths(cells[5 + i]);
      r.kinds.push_back(k);
    }
  } else {
    try {
      const Json j = Json::parse(text);
      r.set_id = j.at("set_id").get<std::string>();
      for (const auto& e : j.at("kinds")) {
        KindReport k;
        k.kind = parse_source_kind(e.at("kind").get<std::string>());
        k.n = e.at("n").get<int>();
        k.q1_yes = parse_hundredths(e.at("q1_yes_pct").get<std::string>());
        k.q2_yes = parse_hundredths(e.at("q2_yes_pct").get<std::string>());
        for (std::size_t i = 0; i < 4; ++i)
          k.q3[i] = parse_hundredths(e.at("q3_pct").at(std::string(kQ3Values[i])).get<std::string>());
        r.kinds.push_back(k);
      }
    } catch (const Json::exception& e) {
      fail("malformed report: ", e.what());
    }
  }
  require(!r.kinds.empty(), "report contains no rows");
  return r;
}

// ---------------------------------------------------------------------------
// Session store with an append-only NDJSON event log.

struct SessionInfo {
  std::string session_id;
  std::string label;
  std::string set_id;
  std::vector<std::string> order;  // item ids in presentation order
  bool closed = false;
};

struct SubmitAck {
  std::string session_id;
  std::string item_id;
  std::size_t revision = 0;  // 1 for the first submission
};

class EvaluationStore {
 public:
  // `log_path` empty keeps everything in memory. An existing log is replayed.
  explicit EvaluationStore(std::vector<ItemSet> sets, std::filesystem::path log_path = {},
                           std::uint64_t seed = 0)
      : log_path_(std::move(log_path)), seed_(seed) {
    for (auto& s : sets) {
      require(!sets_.count(s.id), "duplicate item set '", s.id, "'");
      for (const auto& it : s.items) {
        images_.emplace(image_id(s.id, it.reference_image), it.reference_image);
        images_.emplace(image_id(s.id, it.tactile_image), it.tactile_image);
      }
      std::string id = s.id;
      sets_.emplace(std::move(id), std::move(s));
    }
    if (!log_path_.empty()) replay();
  }

  EvaluationStore(const EvaluationStore&) = delete;
  EvaluationStore& operator=(const EvaluationStore&) = delete;

  const ItemSet& item_set(const std::string& id) const {
    auto it = sets_.find(id);
    require(it != sets_.end(), "unknown item set '", id, "'");
    return it->second;
  }

  bool has_item_set(const std::string& id) const { return sets_.count(id) != 0; }

  static std::string image_id(const std::string& set_id, const std::string& path) {
    return opaque_id(set_id, "image|" + path);
  }

  static std::string image_url(const std::string& set_id, const std::string& path) {
    return "/images/" + image_id(set_id, path);
  }

  std::optional<std::string> image_path(const std::string& opaque) const {
    auto it = images_.find(opaque);
    if (it == images_.end()) return std::nullopt;
    return it->second;
  }

  SessionInfo create_session(const std::string& label, const std::string& set_id) {
    std::lock_guard lock(mutex_);
    const ItemSet& set = item_set(set_id);
    require(!set.items.empty(), "item set '", set_id, "' is empty");
    SessionInfo s;
    s.session_id = hex_id(derive_seed(seed_, fnv1a(set_id) + sessions_.size()));
    while (sessions_.count(s.session_id))
      s.session_id = hex_id(mix_seed(fnv1a(s.session_id)));
    s.label = label;
    s.set_id = set_id;
    for (const auto& it : set.items) s.order.push_back(it.item_id);
    Rng rng(fnv1a(s.session_id));
    std::shuffle(s.order.begin(), s.order.end(), rng.engine());
    log(Json{{"event", "session"},
             {"session_id", s.session_id},
             {"label", s.label},
             {"set_id", s.set_id},
             {"order", s.order}});
    sessions_.emplace(s.session_id, s);
    return s;
  }

  bool has_session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return sessions_.count(id) != 0;
  }

  const SessionInfo& session(const std::string& id) const {
    auto it = sessions_.find(id);
    require(it != sessions_.end(), "unknown session '", id, "'");
    return it->second;
  }

  // Evaluator payload for the first unanswered item, or nullopt when done.
  std::optional<Json> next_payload(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const SessionInfo& s = session(session_id);
    const ItemSet& set = item_set(s.set_id);
    std::size_t answered = 0;
    const std::string* next = nullptr;
    for (const auto& id : s.order) {
      if (latest_.count({session_id, id})) ++answered;
      else if (!next) next = &id;
    }
    if (!next) return std::nullopt;
    const EvaluationItem& item = *set.find(*next);
    return Json{{"item_id", item.item_id},
                {"class", item.class_name},
                {"reference_url", image_url(set.id, item.reference_image)},
                {"tactile_url", image_url(set.id, item.tactile_image)},
                {"progress", {{"current", answered + 1}, {"total", s.order.size()}}}};
  }

  std::size_t answered(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const SessionInfo& s = session(session_id);
    std::size_t n = 0;
    for (const auto& id : s.order) n += latest_.count({session_id, id});
    return n;
  }

  SubmitAck submit(Response r) {
    std::lock_guard lock(mutex_);
    const SessionInfo& s = session(r.session_id);
    require(!s.closed, "session '", r.session_id, "' is closed");
    require(std::find(s.order.begin(), s.order.end(), r.item_id) != s.order.end(),
            "item '", r.item_id, "' does not belong to session '", r.session_id, "'");
    if (r.timestamp.empty()) r.timestamp = now_timestamp();
    log(response_json(r));
    return apply(std::move(r));
  }

  void close_session(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    require(!session(session_id).closed, "session '", session_id, "' is already closed");
    log(Json{{"event", "close"}, {"session_id", session_id}});
    sessions_.at(session_id).closed = true;
  }

  // Every submission for (session, item), oldest first.
  std::vector<Response> history(const std::string& session_id, const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    std::vector<Response> out;
    for (const auto& r : history_)
      if (r.session_id == session_id && r.item_id == item_id) out.push_back(r);
    return out;
  }

  // Latest response per (session, item) across all sessions of the set.
  std::vector<Response> responses_for_set(const std::string& set_id) const {
    std::lock_guard lock(mutex_);
    item_set(set_id);
    std::vector<Response> out;
    for (const auto& [key, idx] : latest_)
      if (sessions_.at(key.first).set_id == set_id) out.push_back(history_[idx]);
    return out;
  }

  AggregateReport report(const std::string& set_id) const {
    const auto responses = responses_for_set(set_id);
    return aggregate(item_set(set_id), responses);
  }

  std::size_t session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

 private:
  static Json response_json(const Response& r) {
    return Json{{"event", "response"},
                {"session_id", r.session_id},
                {"item_id", r.item_id},
                {"q1", r.q1},
                {"q2", r.q2},
                {"q3", to_string(r.q3)},
                {"q4", r.q4 ? Json(*r.q4) : Json(nullptr)},
                {"timestamp", r.timestamp}};
  }

  SubmitAck apply(Response r) {
    const std::pair<std::string, std::string> key{r.session_id, r.item_id};
    SubmitAck ack{r.session_id, r.item_id, ++revisions_[key]};
    history_.push_back(std::move(r));
    latest_[key] = history_.size() - 1;
    return ack;
  }

  // Appends one line and syncs it to disk before the caller acknowledges.
  void log(const Json& event) {
    if (log_path_.empty()) return;
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    std::FILE* f = std::fopen(log_path_.c_str(), "ab");
    require(f != nullptr, "cannot open event log '", log_path_.string(), "'");
    const std::string line = event.dump() + "\n";
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() &&
                    std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
    std::fclose(f);
    require(ok, "failed writing event log '", log_path_.string(), "'");
  }

  void replay() {
    if (!std::filesystem::exists(log_path_)) return;
    std::ifstream in(log_path_);
    require(in.good(), "cannot read event log '", log_path_.string(), "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::exception&) {
        if (in.peek() == EOF) break;  // torn tail from an interrupted append
        fail("event log line ", lineno, " is not valid JSON");
      }
      try {
        const std::string ev = j.at("event").get<std::string>();
        if (ev == "session") {
          SessionInfo s{j.at("session_id").get<std::string>(), j.at("label").get<std::string>(),
                        j.at("set_id").get<std::string>(),
                        j.at("order").get<std::vector<std::string>>(), false};
          require(has_item_set(s.set_id), "event log refers to unknown item set '", s.set_id, "'");
          sessions_.emplace(s.session_id, std::move(s));
        } else if (ev == "response") {
          Response r;
          r.session_id = j.at("session_id").get<std::string>();
          r.item_id = j.at("item_id").get<std::string>();
          r.q1 = j.at("q1").get<bool>();
          r.q2 = j.at("q2").get<bool>();
          r.q3 = parse_q3(j.at("q3").get<std::string>());
          if (!j.at("q4").is_null()) r.q4 = j.at("q4").get<std::string>();
          r.timestamp = j.value("timestamp", "");
          session(r.session_id);
          apply(std::move(r));
        } else if (ev == "close") {
          sessions_.at(j.at("session_id").get<std::string>()).closed = true;
        } else {
          fail("event log line ", lineno, ": unknown event '", ev, "'");
        }
      } catch (const Json::exception& e) {
        fail("event log line ", lineno, ": ", e.what());
      } catch (const std::out_of_range&) {
        fail("event log line ", lineno, " refers to an unknown session");
      }
    }
  }

  std::map<std::string, ItemSet> sets_;
  std::map<std::string, std::string> images_;  // opaque id -> path
  std::map<std::string, SessionInfo> sessions_;
  std::vector<Response> history_;
  std::map<std::pair<std::string, std::string>, std::size_t> latest_;
  std::map<std::pair<std::string, std::string>, std::size_t> revisions_;
  std::filesystem::path log_path_;
  std::uint64_t seed_;
  mutable std::recursive_mutex mutex_;
};

}  // namespace tactile
