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

#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "blinding.hpp"
#include "tactile/eval/server.hpp"
#include "tactile/image_io.hpp"
#include "test_util.hpp"

namespace tactile {
namespace {

using testing::TempDir;

// Server on an ephemeral loopback port for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(EvaluationStore& store) {
    install_routes(server_, store);
    server_.set_logger([](const httplib::Request&, const httplib::Response&) {});
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Json body_of(const httplib::Result& r) { return Json::parse(r->body); }

std::string post_session(httplib::Client& c, const std::string& set) {
  auto r = c.Post("/sessions", Json{{"label", "rater"}, {"item_set", set}}.dump(),
                  "application/json");
  EXPECT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  return body_of(r).at("session_id").get<std::string>();
}

httplib::Result answer(httplib::Client& c, const std::string& sid, const Json& body) {
  return c.Post("/sessions/" + sid + "/responses", body.dump(), "application/json");
}

TEST(Server, FullSessionFlowIsBlind) {
  const ItemSet set = testing::paired_item_set("s1", 3);
  EvaluationStore store({set});
  LiveServer live(store);
  auto c = live.client();
  const std::string sid = post_session(c, "s1");

  std::set<std::string> seen;
  for (int i = 0; i < 6; ++i) {
    auto r = c.Get("/sessions/" + sid + "/next");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    const Json p = body_of(r);
    EXPECT_TRUE(testing::blinding_violations(p, testing::leak_strings(set)).empty()) << p.dump();
    EXPECT_EQ(p["progress"]["current"], i + 1);
    EXPECT_EQ(p["progress"]["total"], 6);
    seen.insert(p["item_id"].get<std::string>());
    const bool as_bool = i % 2 == 0;
    Json a{{"item_id", p["item_id"]},
           {"q1", as_bool ? Json(true) : Json("yes")},
           {"q2", as_bool ? Json(false) : Json("no")},
           {"q3", "minor_edits"}};
    auto ack = answer(c, sid, a);
    ASSERT_TRUE(ack);
    ASSERT_EQ(ack->status, 200) << ack->body;
    EXPECT_EQ(body_of(ack)["progress"]["answered"], i + 1);
    EXPECT_EQ(body_of(ack)["revision"], 1);
  }
  EXPECT_EQ(seen.size(), 6u);
  auto done = c.Get("/sessions/" + sid + "/next");
  ASSERT_TRUE(done);
  EXPECT_EQ(body_of(done)["complete"], true);
  EXPECT_TRUE(testing::blinding_violations(body_of(done)).empty());

  auto report = c.Get("/reports/s1?format=json");
  ASSERT_TRUE(report);
  ASSERT_EQ(report->status, 200);
  const AggregateReport r = import_report(report->body, ReportFormat::kJson);
  ASSERT_EQ(r.kinds.size(), 2u);
  EXPECT_EQ(r.kinds[0].n, 3);
  EXPECT_EQ(r.kinds[0].q1_yes, 10000);
  EXPECT_EQ(r.kinds[0].q2_yes, 0);
  EXPECT_EQ(r.kinds[0].q3[1], 10000);

  auto csv = c.Get("/reports/s1?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");
  EXPECT_EQ(import_report(csv->body, ReportFormat::kCsv), r);

  auto closed = c.Post("/sessions/" + sid + "/close", "", "application/json");
  ASSERT_TRUE(closed);
  EXPECT_EQ(closed->status, 200);
  auto late = answer(c, sid, Json{{"item_id", *seen.begin()}, {"q1", true}, {"q2", true},
                                  {"q3", "reject"}});
  ASSERT_TRUE(late);
  EXPECT_EQ(late->status, 400);
}

TEST(Server, ResubmissionRevisesAnswer) {
  EvaluationStore store({testing::paired_item_set("s1", 1)});
  LiveServer live(store);
  auto c = live.client();
  const std::string sid = post_session(c, "s1");
  const std::string item = body_of(c.Get("/sessions/" + sid + "/next"))["item_id"];
  answer(c, sid, Json{{"item_id", item}, {"q1", true}, {"q2", true}, {"q3", "accept_as_is"}});
  auto second =
      answer(c, sid, Json{{"item_id", item}, {"q1", false}, {"q2", true}, {"q3", "reject"},
                          {"q4", "lines too thin"}});
  ASSERT_TRUE(second);
  EXPECT_EQ(body_of(second)["revision"], 2);
  EXPECT_EQ(store.history(sid, item).size(), 2u);
  EXPECT_EQ(store.responses_for_set("s1").front().q4, "lines too thin");
}

TEST(Server, ValidationErrors) {
  EvaluationStore store({testing::paired_item_set("s1", 1)});
  LiveServer live(store);
  auto c = live.client();
  const std::string sid = post_session(c, "s1");
  const std::string item = body_of(c.Get("/sessions/" + sid + "/next"))["item_id"];

  auto bad_q3 = answer(c, sid, Json{{"item_id", item}, {"q1", true}, {"q2", true}, {"q3", "ok"}});
  ASSERT_TRUE(bad_q3);
  EXPECT_EQ(bad_q3->status, 400);
  EXPECT_NE(body_of(bad_q3)["error"].get<std::string>().find("accept_as_is"), std::string::npos);

  auto no_q3 = answer(c, sid, Json{{"item_id", item}, {"q1", true}, {"q2", true}});
  EXPECT_EQ(no_q3->status, 400);
  auto bad_q1 = answer(c, sid, Json{{"item_id", item}, {"q1", "maybe"}, {"q2", true},
                                    {"q3", "reject"}});
  EXPECT_EQ(bad_q1->status, 400);
  auto foreign = answer(c, sid, Json{{"item_id", "ffffffffffffffff"}, {"q1", true}, {"q2", true},
                                     {"q3", "reject"}});
  EXPECT_EQ(foreign->status, 400);
  auto junk = c.Post("/sessions/" + sid + "/responses", "{oops", "application/json");
  EXPECT_EQ(junk->status, 400);
  EXPECT_EQ(store.history(sid, item).size(), 0u);

  auto no_set = c.Post("/sessions", R"({"label":"x"})", "application/json");
  EXPECT_EQ(no_set->status, 400);
  auto unknown_set = c.Post("/sessions", R"({"item_set":"zz"})", "application/json");
  EXPECT_EQ(unknown_set->status, 400);
  EXPECT_EQ(c.Get("/sessions/0123456789abcdef/next")->status, 404);
  EXPECT_EQ(c.Get("/reports/zz")->status, 404);
  EXPECT_EQ(c.Get("/reports/s1?format=xml")->status, 400);
  EXPECT_EQ(c.Get("/images/0123456789abcdef")->status, 404);
}

TEST(Server, ReportWithoutResponsesIsAnError) {
  EvaluationStore store({testing::paired_item_set("s1", 1)});
  LiveServer live(store);
  auto c = live.client();
  auto r = c.Get("/reports/s1");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST(Server, ServesImagesByOpaqueId) {
  TempDir dir;
  Image img(4, 4, 0.5);
  write_png(dir / "generated/cat/g.png", img);
  write_png(dir / "refs/cat/photo.png", Image(4, 4, -0.5));
  const std::string ref = (dir / "refs/cat/photo.png").string();
  const std::string tac = (dir / "generated/cat/g.png").string();
  const ItemSet set = make_item_set("img", {{"", "cat", ref, tac, SourceKind::kGenerated, "original"}});
  EvaluationStore store({set});
  LiveServer live(store);
  auto c = live.client();
  const std::string sid = post_session(c, "img");
  const Json p = body_of(c.Get("/sessions/" + sid + "/next"));
  EXPECT_TRUE(testing::blinding_violations(p, testing::leak_strings(set)).empty());
  auto r = c.Get(p["tactile_url"].get<std::string>());
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(r->body, testing::slurp(tac));
  EXPECT_EQ(c.Get(p["reference_url"].get<std::string>())->body, testing::slurp(ref));
}

TEST(Server, ConcurrentSessions) {
  EvaluationStore store({testing::paired_item_set("s1", 2)});
  LiveServer live(store);
  std::vector<std::thread> raters;
  for (int k = 0; k < 4; ++k)
    raters.emplace_back([&live] {
      auto c = live.client();
      const std::string sid = post_session(c, "s1");
      for (;;) {
        const Json p = body_of(c.Get("/sessions/" + sid + "/next"));
        if (p.contains("complete")) break;
        answer(c, sid, Json{{"item_id", p["item_id"]}, {"q1", true}, {"q2", true},
                            {"q3", "accept_as_is"}});
      }
    });
  for (auto& t : raters) t.join();
  EXPECT_EQ(store.session_count(), 4u);
  EXPECT_EQ(store.responses_for_set("s1").size(), 16u);
}

}  // namespace
}  // namespace tactile
