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

// JSON over HTTP for the evaluation store.
//
//   POST /sessions                  {"label", "item_set"}
//   GET  /sessions/{id}/next
//   POST /sessions/{id}/responses   {"item_id", "q1", "q2", "q3", "q4"?}
//   POST /sessions/{id}/close
//   GET  /reports/{set}?format=json|csv
//   GET  /images/{opaque-id}

#pragma once

#include <fstream>
#include <functional>
#include <iostream>
#include <string>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "tactile/eval/evaluation.hpp"

#include "httplib.h"

namespace tactile {

namespace detail {

inline void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline bool require_session(const EvaluationStore& store, const std::string& id,
                            httplib::Response& res) {
  if (store.has_session(id)) return true;
  send_json(res, 404, Json{{"error", "unknown session '" + id + "'"}});
  return false;
}

inline bool parse_yes_no(const Json& body, const char* key) {
  require(body.contains(key), "missing required field '", key, "'");
  const Json& v = body.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  fail("field '", key, "' must be yes/no or a boolean");
}

// Runs `fn`, mapping user errors to 400 and anything else to 500.
inline void guarded(httplib::Response& res, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_json(res, 400, Json{{"error", e.what()}});
  } catch (const Json::exception& e) {
    send_json(res, 400, Json{{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, Json{{"error", e.what()}});
  }
}

}  // namespace detail

inline void install_routes(httplib::Server& server, EvaluationStore& store) {
  using detail::guarded;
  using detail::send_json;

  server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Json body = Json::parse(req.body);
      require(body.contains("item_set"), "missing required field 'item_set'");
      const auto s = store.create_session(body.value("label", ""),
                                          body.at("item_set").get<std::string>());
      send_json(res, 201, Json{{"session_id", s.session_id}, {"total", s.order.size()}});
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/next)",
             [&store](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const std::string id = req.matches[1];
                 if (!detail::require_session(store, id, res)) return;
                 if (auto payload = store.next_payload(id)) {
                   send_json(res, 200, *payload);
                 } else {
                   const auto total = store.session(id).order.size();
                   send_json(res, 200,
                             Json{{"complete", true},
                                  {"progress", {{"current", total}, {"total", total}}}});
                 }
               });
             });

  server.Post(R"(/sessions/([0-9a-f]+)/responses)",
              [&store](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  Response r;
                  r.session_id = req.matches[1];
                  if (!detail::require_session(store, r.session_id, res)) return;
                  const Json body = Json::parse(req.body);
                  require(body.contains("item_id"), "missing required field 'item_id'");
                  r.item_id = body.at("item_id").get<std::string>();
                  r.q1 = detail::parse_yes_no(body, "q1");
                  r.q2 = detail::parse_yes_no(body, "q2");
                  require(body.contains("q3") && body.at("q3").is_string(),
                          "missing required field 'q3'");
                  r.q3 = parse_q3(body.at("q3").get<std::string>());
                  if (body.contains("q4") && !body.at("q4").is_null())
                    r.q4 = body.at("q4").get<std::string>();
                  const auto ack = store.submit(std::move(r));
                  send_json(res, 200,
                            Json{{"session_id", ack.session_id},
                                 {"item_id", ack.item_id},
                                 {"revision", ack.revision},
                                 {"progress",
                                  {{"answered", store.answered(ack.session_id)},
                                   {"total", store.session(ack.session_id).order.size()}}}});
                });
              });

  server.Post(R"(/sessions/([0-9a-f]+)/close)",
              [&store](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  if (!detail::require_session(store, req.matches[1], res)) return;
                  store.close_session(req.matches[1]);
                  send_json(res, 200, Json{{"closed", true}});
                });
              });

  server.Get(R"(/reports/([^/]+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string set_id = req.matches[1];
      if (!store.has_item_set(set_id)) {
        send_json(res, 404, Json{{"error", "unknown item set '" + set_id + "'"}});
        return;
      }
      const auto format =
          parse_report_format(req.has_param("format") ? req.get_param_value("format") : "json");
      const std::string text = export_report(store.report(set_id), format);
      res.status = 200;
      res.set_content(text, format == ReportFormat::kCsv ? "text/csv" : "application/json");
    });
  });

  server.Get(R"(/images/([0-9a-f]+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto path = store.image_path(req.matches[1]);
      if (!path) {
        send_json(res, 404, Json{{"error", "unknown image"}});
        return;
      }
      std::ifstream in(*path, std::ios::binary);
      require(in.good(), "image file is unavailable");
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      res.status = 200;
      res.set_content(bytes, "image/png");
    });
  });

  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << req.method << ' ' << req.path << ' ' << res.status << '\n';
  });
}

}  // namespace tactile
