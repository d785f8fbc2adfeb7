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

#include "tactile/adapters/serialization.hpp"
#include "tactile/adapters/training.hpp"
#include "tactile/data/loaders.hpp"

namespace tactile {
namespace {

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.image_size = 8;
  c.num_steps = 50;
  return c;
}

// Predicts a constant; makes the loss a closed-form function of the draws.
struct ConstantModel {
  double value = 0.0;
  int size = 8;
  int image_size() const { return size; }
  Image forward(const Image& x, int, std::span<const double>) const {
    return Image(x.height, x.width, value);
  }
};

TEST(DdpmLoss, MatchesHandComputedMean) {
  const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
  std::vector<DiffusionExample> batch;
  Rng rng(4);
  for (int i = 0; i < 3; ++i) batch.push_back({gaussian_image(8, 8, rng), Vector::Zero(4)});
  const ConstantModel m{0.25};
  double expected = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const NoiseDraw d = draw_noise(99, i, 50, 8, 8);
    EXPECT_GE(d.t, 1);
    EXPECT_LE(d.t, 50);
    for (std::size_t k = 0; k < d.eps.size(); ++k) expected += (d.eps[k] - 0.25) * (d.eps[k] - 0.25);
  }
  expected /= 3.0;
  EXPECT_NEAR(ddpm_loss(m, batch, s, 99), expected, 1e-12);
  EXPECT_THROW(ddpm_loss(m, std::span<const DiffusionExample>{}, s, 99), Error);
}

TEST(DdpmLoss, NoiseDrawIndependentOfBatchSize) {
  const NoiseDraw a = draw_noise(7, 2, 1000, 8, 8);
  const NoiseDraw b = draw_noise(7, 2, 1000, 8, 8);
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.eps, b.eps);
  EXPECT_NE(draw_noise(7, 3, 1000, 8, 8).eps, a.eps);
}

TEST(DdpmLoss, GradientPathAgreesWithLoss) {
  const DenoiserNet net(small_config(), 3);
  const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
  std::vector<DiffusionExample> batch;
  Rng rng(5);
  for (int i = 0; i < 4; ++i) {
    Vector c(64);
    for (int k = 0; k < 64; ++k) c(k) = 0.1 * rng.normal();
    batch.push_back({gaussian_image(8, 8, rng), c});
  }
  const LossGradients g = ddpm_loss_gradients(net, batch, s, 11);
  EXPECT_NEAR(g.loss, ddpm_loss(net, batch, s, 11), 1e-10);
  EXPECT_EQ(g.conds.size(), 4u);
  EXPECT_EQ(g.weights.size(), net.params().size());
}

TEST(DreamBoothLoss, PriorWeightEndpoints) {
  EXPECT_DOUBLE_EQ(dreambooth_loss(0.7, 0.4, 0.0), 0.7);
  EXPECT_DOUBLE_EQ(dreambooth_loss(0.7, 0.4, 1.0), 0.7 + 0.4);
  EXPECT_DOUBLE_EQ(dreambooth_loss(0.7, 0.4, 0.5), 0.7 + 0.5 * 0.4);
  EXPECT_THROW(dreambooth_loss(0.7, 0.4, -0.1), Error);
  EXPECT_THROW(dreambooth_loss(-1.0, 0.4, 1.0), Error);
}

struct FinetuneFixture : ::testing::Test {
  std::shared_ptr<const DenoiserNet> base = std::make_shared<const DenoiserNet>(small_config(), 2);
  Vocabulary vocab{64, 128, 3};
  NoiseSchedule schedule = make_linear_schedule(50, 1e-4, 0.02);
  std::vector<CaptionedImage> subject = synthetic_captioned("triangle", 4, 8, 1);
  std::vector<CaptionedImage> prior = synthetic_captioned("circle", 4, 8, 2);
  FinetuneConfig cfg;

  void SetUp() override {
    vocab.bind_identifier("tactile");
    cfg.epochs = 2;
    cfg.repeats = 1;
    cfg.batch_size = 2;
    cfg.rank = 4;
    cfg.alpha = 2.0;
  }

  AdaptedModel model() const { return attach_lora(base, default_lora_targets(*base, 4), 4, 2.0, 1); }
};

TEST_F(FinetuneFixture, CombinedLossIsSubjectPlusWeightedPrior) {
  cfg.prior_weight = 0.5;
  const FinetuneResult r = finetune(model(), vocab, subject, prior, schedule, cfg);
  ASSERT_EQ(r.log.epoch_loss.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_GT(r.log.epoch_prior_loss[e], 0.0);
    EXPECT_NEAR(r.log.epoch_loss[e],
                r.log.epoch_subject_loss[e] + 0.5 * r.log.epoch_prior_loss[e], 1e-12);
  }
}

TEST_F(FinetuneFixture, ZeroPriorWeightIgnoresPriorSet) {
  cfg.prior_weight = 0.0;
  const FinetuneResult a = finetune(model(), vocab, subject, {}, schedule, cfg);
  const FinetuneResult b = finetune(model(), vocab, subject, prior, schedule, cfg);
  EXPECT_EQ(a.log.epoch_loss, a.log.epoch_subject_loss);
  EXPECT_EQ(a.log.epoch_loss, b.log.epoch_loss);
}

TEST_F(FinetuneFixture, UpdatesOnlyAdaptersAndSubjectRows) {
  const FinetuneResult r = finetune(model(), vocab, subject, prior, schedule, cfg);
  std::set<std::string> lora, text;
  for (const auto& k : r.log.updated) (k.starts_with("lora:") ? lora : text).insert(k);
  EXPECT_EQ(lora.size(), 2 * r.model.adapters().size());
  const TokenBag bag = token_bag(subject.front().prompt, vocab);
  std::set<std::string> expected_text;
  for (const auto& [row, count] : bag) expected_text.insert(text_row_key(row));
  EXPECT_EQ(text, expected_text);
  EXPECT_TRUE(expected_text.count(text_row_key(vocab.row_for("tactile"))));
  const auto changed = changed_rows(vocab, r.vocab);
  EXPECT_EQ(changed.size(), bag.size());
}

TEST_F(FinetuneFixture, FrozenTextKeepsVocabulary) {
  cfg.train_text = false;
  const FinetuneResult r = finetune(model(), vocab, subject, prior, schedule, cfg);
  EXPECT_EQ(r.vocab, vocab);
  for (const auto& k : r.log.updated) EXPECT_TRUE(k.starts_with("lora:")) << k;
}

TEST_F(FinetuneFixture, Deterministic) {
  const FinetuneResult a = finetune(model(), vocab, subject, prior, schedule, cfg);
  const FinetuneResult b = finetune(model(), vocab, subject, prior, schedule, cfg);
  EXPECT_EQ(a.log.epoch_loss, b.log.epoch_loss);
  EXPECT_EQ(a.model.adapters(), b.model.adapters());
}

TEST_F(FinetuneFixture, InvalidInputs) {
  EXPECT_THROW(finetune(model(), vocab, {}, prior, schedule, cfg), Error);
  EXPECT_THROW(finetune(model(), vocab, subject, {}, schedule, cfg), Error);
  EXPECT_THROW(finetune(AdaptedModel(base, {}), vocab, subject, prior, schedule, cfg), Error);
  FinetuneConfig bad = cfg;
  bad.prior_weight = -1.0;
  EXPECT_THROW(finetune(model(), vocab, subject, prior, schedule, bad), Error);
  bad = cfg;
  bad.epochs = 0;
  EXPECT_THROW(finetune(model(), vocab, subject, prior, schedule, bad), Error);
}

TEST(PriorSet, UsesClassPromptAndIsDeterministic) {
  const DenoiserNet net(small_config(), 2);
  Vocabulary vocab(64, 128, 3);
  const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
  SamplerOptions so;
  so.steps = 5;
  so.seed = 4;
  const std::string prompt = strip_token(shape_prompt("triangle").rendered, "tactile");
  EXPECT_EQ(prompt.find("tactile"), std::string::npos);
  const auto a = generate_prior_set(net, vocab, prompt, 3, s, so);
  const auto b = generate_prior_set(net, vocab, prompt, 3, s, so);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].prompt, prompt);
    EXPECT_EQ(a[i].x0, b[i].x0);
  }
  EXPECT_NE(a[0].x0, a[1].x0);
}

TEST(BaseTraining, LogsEveryEpochAndIsDeterministic) {
  Vocabulary vocab(64, 128, 3);
  vocab.bind_identifier("tactile");
  auto data = synthetic_captioned("circle", 4, 8, 1);
  const auto more = synthetic_captioned("square", 4, 8, 2);
  data.insert(data.end(), more.begin(), more.end());
  const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
  BaseTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  DenoiserNet a(small_config(), 1), b(small_config(), 1);
  std::vector<int> seen;
  const TrainingLog la = train_base(a, vocab, data, s, cfg, [&](int e, double) { seen.push_back(e); });
  const TrainingLog lb = train_base(b, vocab, data, s, cfg);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(la.epoch_loss, lb.epoch_loss);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  EXPECT_NE(a.params().checksum(), DenoiserNet(small_config(), 1).params().checksum());
  EXPECT_THROW(train_base(a, vocab, {}, s, cfg), Error);
  EXPECT_THROW(train_base(a, vocab, data, make_linear_schedule(100, 1e-4, 0.02), cfg), Error);
}

}  // namespace
}  // namespace tactile
