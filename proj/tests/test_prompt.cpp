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

#include <sstream>
#include <thread>

#include "tactile/prompt/embedder.hpp"
#include "tactile/prompt/template.hpp"
#include "test_util.hpp"

namespace tactile {
namespace {

const char* kCatPrompt =
    "Create a tactile graphic of a cat, specifically designed for individuals with visual "
    "impairments. The graphic should feature raised, smooth lines to delineate the whiskers, "
    "eyes, paws, against a simplistic background to ensure stark contrast.";

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

TEST(Template, ExactSentence) {
  EXPECT_EQ(render_prompt("cat", {"whiskers", "eyes", "paws"}), kCatPrompt);
}

TEST(Template, ArticleFollowsVowel) {
  EXPECT_EQ(indefinite_article("apple"), "an");
  EXPECT_EQ(indefinite_article("Elephant"), "an");
  EXPECT_EQ(indefinite_article("umbrella"), "an");
  EXPECT_EQ(indefinite_article("bee"), "a");
  EXPECT_NE(render_prompt("egg", {"shell"}).find("of an egg,"), std::string::npos);
}

TEST(Template, RoundTripsEveryDatasetClass) {
  const auto classes = testing::dataset_counts();
  ASSERT_EQ(classes.size(), 66u);
  const std::vector<std::string> pool = {"outline", "handle", "left wing", "base", "stripes"};
  for (const auto& c : classes) {
    const std::string object = lower(c.name);
    for (std::size_t k = 1; k <= pool.size(); ++k) {
      const std::vector<std::string> features(pool.begin(), pool.begin() + static_cast<long>(k));
      const std::string text = render_prompt(object, features);
      const PromptValidation v = validate_prompt(text);
      ASSERT_TRUE(v.ok) << text << " : " << v.reason;
      EXPECT_EQ(v.object_name, object);
      EXPECT_EQ(v.features, join_features(features));
    }
  }
}

TEST(Template, RejectsEmptySlots) {
  EXPECT_THROW(render_prompt("", {"x"}), Error);
  EXPECT_THROW(render_prompt("cat", {}), Error);
  EXPECT_THROW(render_prompt("cat", {"whiskers", ""}), Error);
}

TEST(Validation, ReportsFirstDeviationOffset) {
  const std::string good = kCatPrompt;
  EXPECT_TRUE(validate_prompt(good).ok);

  std::string bad = good;
  bad[7] = 'X';  // inside the prefix
  auto v = validate_prompt(bad);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.deviation, 7u);

  bad = good;
  const std::size_t at = good.find("specifically") + 3;
  bad[at] = 'Q';
  v = validate_prompt(bad);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.deviation, at);

  bad = good;
  bad.replace(good.find("stark"), 5, "sharp");
  v = validate_prompt(bad);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.deviation, good.find("stark") + 1);  // shared leading s

  v = validate_prompt("Create a tactile graphic of the cat, whatever");
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.deviation, std::string("Create a tactile graphic of ").size());
}

TEST(Validation, EmptyFeatureSlotRejected) {
  std::string text = render_prompt("cat", {"x"});
  text.erase(text.find(", against") - 1, 1);
  const auto v = validate_prompt(text);
  EXPECT_FALSE(v.ok);
}

TEST(Paraphrase, MustKeepIdentifier) {
  const PromptRecord r = make_prompt_record("cat", {"whiskers"});
  EXPECT_EQ(r.variant, PromptVariant::kOriginal);
  EXPECT_EQ(r.active_text(), r.rendered);
  EXPECT_THROW(register_paraphrase(r, "A raised drawing of a cat"), Error);
  const PromptRecord p = register_paraphrase(r, "A tactile cat drawing with bold whiskers");
  EXPECT_EQ(p.variant, PromptVariant::kParaphrased);
  EXPECT_EQ(p.active_text(), "A tactile cat drawing with bold whiskers");
  EXPECT_EQ(p.rendered, r.rendered);
  EXPECT_EQ(to_string(p.variant), "paraphrased");
}

TEST(Paraphrase, ReplacementEmitsNotice) {
  std::ostringstream captured;
  std::ostream* saved = notice_stream();
  notice_stream() = &captured;
  PromptRecord r = register_paraphrase(make_prompt_record("cat", {"paws"}), "tactile cat one");
  r = register_paraphrase(r, "tactile cat two");
  notice_stream() = saved;
  EXPECT_EQ(*r.paraphrase_text, "tactile cat two");
  EXPECT_NE(captured.str().find("replacing paraphrase"), std::string::npos);
}

TEST(PromptStore, LatestWinsAndHistoryIsKept) {
  PromptStore store;
  store.upsert(make_prompt_record("cat", {"paws"}));
  store.upsert(make_prompt_record("dog", {"tail"}));
  store.upsert(make_prompt_record("cat", {"whiskers"}));
  EXPECT_EQ(store.history_size(), 3u);
  EXPECT_EQ(store.latest("cat")->features, std::vector<std::string>{"whiskers"});
  EXPECT_FALSE(store.latest("cow").has_value());
}

TEST(PromptStore, ConcurrentUpserts) {
  PromptStore store;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&store, t] {
      for (int i = 0; i < 50; ++i)
        store.upsert(make_prompt_record("obj" + std::to_string(t), {std::to_string(i)}));
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(store.history_size(), 200u);
  for (int t = 0; t < 4; ++t)
    EXPECT_EQ(store.latest("obj" + std::to_string(t))->features.front(), "49");
}

TEST(Embedder, TokenizeLowercasesAndSplits) {
  EXPECT_EQ(tokenize("A Tactile, cat!"), (std::vector<std::string>{"a", "tactile", "cat"}));
  EXPECT_TRUE(tokenize(" ,. ").empty());
}

TEST(Embedder, BagOfTokensProperties) {
  Vocabulary v(16, 4096, 1);
  const Vector a = embed_prompt("tactile cat with whiskers", v);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_EQ(a, embed_prompt("whiskers with cat tactile", v));
  EXPECT_EQ(a, embed_prompt("TACTILE Cat, with: whiskers", v));
  EXPECT_NE(a, embed_prompt("tactile dog with whiskers", v));
  EXPECT_THROW(embed_prompt("", v), Error);
  EXPECT_THROW(embed_prompt("!!", v), Error);
}

TEST(Embedder, IdentifierGetsDedicatedRow) {
  Vocabulary v(16, 32, 1);
  const int hashed = v.row_for("tactile");
  EXPECT_LT(hashed, 32);
  const int id = v.bind_identifier("tactile");
  EXPECT_EQ(id, 32);
  EXPECT_EQ(v.row_for("tactile"), 32);
  EXPECT_EQ(v.bind_identifier("tactile"), 32);
  EXPECT_EQ(v.rows(), 33);
  EXPECT_THROW(v.bind_identifier("two words"), Error);
  EXPECT_THROW(v.bind_identifier("Upper"), Error);
  // Same seed, same tables.
  Vocabulary w(16, 32, 1);
  w.bind_identifier("tactile");
  EXPECT_EQ(v, w);
}

TEST(Embedder, BackwardMatchesFiniteDifference) {
  Vocabulary v(8, 16, 3);
  const std::string text = "tactile cat cat paws";
  Vector g(8);
  for (int i = 0; i < 8; ++i) g(i) = 0.1 * (i + 1) - 0.3;
  const PromptEmbedding e = embed_prompt_traced(text, v);
  std::map<int, Vector> rows;
  embedding_backward(e, g, rows);
  ASSERT_EQ(rows.size(), e.bag.size());
  const double h = 1e-6;
  for (const auto& [row, grad] : rows) {
    for (int j = 0; j < 8; ++j) {
      const double saved = v.table()(row, j);
      v.table()(row, j) = saved + h;
      const double plus = g.dot(embed_prompt(text, v));
      v.table()(row, j) = saved - h;
      const double minus = g.dot(embed_prompt(text, v));
      v.table()(row, j) = saved;
      EXPECT_NEAR(grad(j), (plus - minus) / (2 * h), 1e-7);
    }
  }
}

TEST(Embedder, StripTokenRemovesWholeWordsOnly) {
  EXPECT_EQ(strip_token("a Tactile graphic, tactile.", "tactile"), "a  graphic, .");
  EXPECT_EQ(strip_token("tactiles stay", "tactile"), "tactiles stay");
}

}  // namespace
}  // namespace tactile
