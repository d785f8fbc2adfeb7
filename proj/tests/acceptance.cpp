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

// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance <name>...  run the named criteria
//
// Exit status is 0 only if every selected criterion passes.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "blinding.hpp"
#include "gradcheck.hpp"
#include "tactile/adapters/training.hpp"
#include "tactile/data/loaders.hpp"
#include "tactile/data/manifest.hpp"
#include "tactile/diffusion/sampler.hpp"
#include "tactile/eval/server.hpp"
#include "tactile/prompt/template.hpp"
#include "test_util.hpp"

namespace tactile {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a failed check; the first few messages are kept.
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || detail.size() < 400) detail += (detail.empty() ? "" : "; ") + what;
    pass = false;
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

template <typename... Args>
std::string str(const Args&... args) {
  std::ostringstream os;
  os.precision(6);
  (os << ... << args);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double oracle_beta(int t, int T) { return 1e-4 + (0.02 - 1e-4) * (t - 1) / (T - 1.0); }

double oracle_alpha_bar(int t, int T) {
  double p = 1.0;
  for (int s = 1; s <= t; ++s) p *= 1.0 - oracle_beta(s, T);
  return p;
}

// ---------------------------------------------------------------------------

Outcome forward_moments() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const NoiseSchedule s = default_schedule();
  const int T = s.num_steps(), draws = 10000;
  Image x0(4, 4);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = -1.0 + 2.0 * static_cast<double>(i) / 15.0;
  double worst_mean = 0.0, worst_var = 0.0;
  for (int t : {1, T / 2, T}) {
    std::vector<double> sum(x0.size(), 0.0), sq(x0.size(), 0.0);
    Rng rng(derive_seed(2026, static_cast<std::uint64_t>(t)));
    for (int d = 0; d < draws; ++d) {
      const Image xt = forward_diffuse(x0, t, gaussian_image(4, 4, rng), s);
      for (std::size_t i = 0; i < xt.size(); ++i) {
        sum[i] += xt[i];
        sq[i] += xt[i] * xt[i];
      }
    }
    const double ab = oracle_alpha_bar(t, T);
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double mean = sum[i] / draws;
      const double var = sq[i] / draws - mean * mean;
      const double dm = std::abs(mean - std::sqrt(ab) * x0[i]);
      const double dv = std::abs(var - (1.0 - ab));
      worst_mean = std::max(worst_mean, dm);
      worst_var = std::max(worst_var, dv);
      o.check(dm <= 0.01, str("t=", t, " pixel ", i, " mean off by ", dm));
      o.check(dv <= 0.02, str("t=", t, " pixel ", i, " variance off by ", dv));
    }
  }
  const double secs = seconds_since(t0);
  o.check(secs < 30.0, str("runtime ", secs, " s"));
  o.note(str("max |mean err| ", worst_mean, ", max |var err| ", worst_var, ", ", secs, " s"));
  return o;
}

Outcome reverse_step_oracle() {
  Outcome o;
  const NoiseSchedule s = default_schedule();
  const int T = s.num_steps();
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = rng.uniform_int(1, T);
    const Image xt = gaussian_image(3, 3, rng);
    const Image eps = gaussian_image(3, 3, rng);
    const Image z = gaussian_image(3, 3, rng);
    const double a = 1.0 - oracle_beta(t, T), ab = oracle_alpha_bar(t, T);
    const Image mean = reverse_step(xt, t, eps, s, nullptr, SigmaMode::kNone);
    const Image anc = reverse_step(xt, t, eps, s, &z, SigmaMode::kDdpm);
    const double sigma = t > 1 ? std::sqrt(oracle_beta(t, T)) : 0.0;
    for (std::size_t i = 0; i < xt.size(); ++i) {
      const double m = (xt[i] - (1.0 - a) / std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(a);
      worst = std::max({worst, std::abs(mean[i] - m), std::abs(anc[i] - (m + sigma * z[i]))});
    }
  }
  o.check(worst <= 1e-12, str("max deviation ", worst));
  o.note(str("1000 triples, max deviation ", worst));
  return o;
}

Outcome inversion() {
  Outcome o;
  const NoiseSchedule s = fast_schedule();
  o.check(s.num_steps() == 50, "fast schedule is not 50 steps");
  Rng rng(11);
  double worst = 0.0;
  for (int t = 1; t <= s.num_steps(); ++t) {
    const Image x0 = gaussian_image(8, 8, rng), eps = gaussian_image(8, 8, rng);
    worst = std::max(worst, max_abs_diff(predict_x0(forward_diffuse(x0, t, eps, s), t, eps, s), x0));
  }
  o.check(worst <= 1e-10, str("max deviation ", worst));
  o.note(str("all 50 steps, max deviation ", worst));
  return o;
}

Outcome gradients() {
  Outcome o;
  testing::GradCheckSetup setup;
  setup.config.image_size = 16;
  setup.per_group = 10;
  double worst = 0.0;
  int groups = 0;
  auto take = [&](const std::vector<testing::GroupCheck>& checks) {
    for (const auto& g : checks) {
      ++groups;
      worst = std::max(worst, g.max_rel_error);
      o.check(g.checked > 0, g.group + " not checked");
      o.check(g.max_rel_error < 1e-4, str(g.group, " relative error ", g.max_rel_error));
    }
  };
  const auto net_checks = testing::check_denoiser(setup);
  o.check(net_checks.size() >= DenoiserNet(setup.config).params().size(),
          "not every parameter group was checked");
  take(net_checks);
  take(testing::check_lora(setup, 4));
  take({testing::check_text_rows(setup, "tactile circle with a raised outline")});
  o.note(str(groups, " groups, max relative error ", worst));
  return o;
}

Outcome lora_contracts() {
  Outcome o;
  const DenoiserConfig config;
  auto base = std::make_shared<const DenoiserNet>(config, 3);
  const int rank = 32;
  const auto targets = default_lora_targets(*base, rank);
  o.check(!targets.empty(), "no target admits rank 32");
  AdaptedModel model = attach_lora(base, targets, rank, 16.0, 5);

  std::size_t expected = 0;
  for (const auto& t : targets) {
    const Matrix& w = base->params().at(t);
    expected += static_cast<std::size_t>(rank) * static_cast<std::size_t>(w.rows() + w.cols());
  }
  o.check(model.trainable_count() == expected,
          str("trainable ", model.trainable_count(), " != ", expected));
  for (const auto& a : model.adapters())
    o.check(a.scale() == 0.5, str(a.target_name, " scale ", a.scale()));

  Rng rng(9);
  const Image x = gaussian_image(config.image_size, config.image_size, rng);
  Vector cond(config.cond_dim);
  for (Eigen::Index i = 0; i < cond.size(); ++i) cond(i) = rng.normal();
  const std::span<const double> c(cond.data(), cond.size());
  const double attach_diff = max_abs_diff(model.forward(x, 400, c), base->forward(x, 400, c));
  o.check(attach_diff == 0.0, str("attach changed output by ", attach_diff));

  model.update_adapters([&](std::vector<LoraAdapter>& adapters) {
    for (auto& a : adapters)
      for (Eigen::Index i = 0; i < a.B.size(); ++i) a.B.data()[i] = 0.05 * rng.normal();
  });
  const MergedDenoiser merged = merge(model);
  double merge_diff = 0.0;
  for (int t : {1, 250, 999}) {
    const Image xi = gaussian_image(config.image_size, config.image_size, rng);
    merge_diff = std::max(merge_diff, max_abs_diff(merged.forward(xi, t, c), model.forward(xi, t, c)));
  }
  o.check(merge_diff <= 1e-8, str("merged forward differs by ", merge_diff));
  double unmerge_diff = 0.0;
  const DenoiserNet restored = unmerge(merged);
  for (const auto& [name, value] : base->params())
    unmerge_diff = std::max(unmerge_diff, (restored.params().at(name) - value).cwiseAbs().maxCoeff());
  o.check(unmerge_diff <= 1e-10, str("unmerge differs by ", unmerge_diff));

  // Freeze contract over a complete (small) fine-tuning run.
  DenoiserConfig small;
  small.image_size = 8;
  small.num_steps = 50;
  auto small_base = std::make_shared<const DenoiserNet>(small, 4);
  const std::uint64_t before = small_base->params().checksum();
  const ParameterSet snapshot = small_base->params();
  Vocabulary vocab(small.cond_dim, 256, 2);
  vocab.bind_identifier("tactile");
  const auto subject = synthetic_captioned("triangle", 4, 8, 1);
  const auto prior = synthetic_captioned("circle", 4, 8, 2);
  FinetuneConfig fc;
  fc.rank = 4;
  fc.alpha = 2.0;
  fc.repeats = 1;
  fc.batch_size = 4;
  const FinetuneResult r =
      finetune(attach_lora(small_base, default_lora_targets(*small_base, 4), 4, 2.0, 1), vocab,
               subject, prior, fast_schedule(), fc);
  o.check(small_base->params().checksum() == before && small_base->params() == snapshot,
          "base weights changed during fine-tuning");
  o.check(r.log.epoch_loss.size() == 20u, "fine-tuning did not log 20 epochs");
  for (const auto& key : r.log.updated)
    o.check(key.rfind("lora:", 0) == 0 || key.rfind("text:", 0) == 0, "optimizer touched " + key);

  o.note(str(targets.size(), " targets, ", expected, " trainable, merge diff ", merge_diff,
             ", unmerge diff ", unmerge_diff));
  return o;
}

Outcome dreambooth_loss_criterion() {
  Outcome o;
  DenoiserConfig config;
  config.image_size = 8;
  config.num_steps = 50;
  const DenoiserNet net(config, 6);
  Vocabulary vocab(config.cond_dim, 256, 3);
  auto examples = [&](const char* cls, std::uint64_t seed) {
    std::vector<DiffusionExample> out;
    for (const auto& e : synthetic_captioned(cls, 4, 8, seed))
      out.push_back({e.x0, embed_prompt(e.prompt, vocab)});
    return out;
  };
  const auto subject = examples("triangle", 1), prior = examples("square", 2);
  const double ls = ddpm_loss(net, std::span<const DiffusionExample>(subject), fast_schedule(), 10);
  const double lp = ddpm_loss(net, std::span<const DiffusionExample>(prior), fast_schedule(), 11);
  o.check(dreambooth_loss(ls, lp, 0.0) == ls, "weight 0 is not the subject loss");
  o.check(dreambooth_loss(ls, lp, 1.0) == ls + lp, "weight 1 is not the exact sum");
  bool threw = false;
  try {
    dreambooth_loss(ls, lp, -0.5);
  } catch (const Error&) {
    threw = true;
  }
  o.check(threw, "negative weight accepted");
  o.note(str("subject ", ls, ", prior ", lp));
  return o;
}

// Mean validation loss over paired seeds.
template <NoisePredictor M>
double validation_loss(const M& model, const Vocabulary& vocab,
                       const std::vector<CaptionedImage>& data, const NoiseSchedule& schedule,
                       int seeds) {
  std::vector<DiffusionExample> batch;
  for (const auto& e : data) batch.push_back({e.x0, embed_prompt(e.prompt, vocab)});
  double total = 0.0;
  for (int s = 0; s < seeds; ++s)
    total += ddpm_loss(model, std::span<const DiffusionExample>(batch), schedule,
                       derive_seed(0xFA11, static_cast<std::uint64_t>(s)));
  return total / seeds;
}

Outcome toy_training() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const NoiseSchedule schedule = default_schedule();
  const int size = 32, per_class = 32;

  DenoiserConfig config;
  config.image_size = size;
  config.num_steps = schedule.num_steps();
  DenoiserNet net(config, 1);
  Vocabulary vocab(config.cond_dim, Vocabulary::kDefaultBuckets, 2);
  vocab.bind_identifier(std::string(prompt_text::kIdentifier));

  std::vector<CaptionedImage> data;
  for (const char* cls : {"circle", "square", "cross", "diamond"}) {
    const auto part = synthetic_captioned(cls, per_class, size, 100);
    data.insert(data.end(), part.begin(), part.end());
  }
  BaseTrainConfig bc;
  bc.seed = 3;
  const TrainingLog base_log = train_base(net, vocab, data, schedule, bc);
  const double first = base_log.epoch_loss.front(), last = base_log.epoch_loss.back();
  o.check(base_log.epoch_loss.size() == 20u, "base training did not run 20 epochs");
  o.check(last < 0.5 * first, str("base loss epoch 20 ", last, " vs epoch 1 ", first));
  const double base_secs = seconds_since(t0);

  // Held-out fifth class.
  const auto subject = synthetic_captioned("triangle", 16, size, 200);
  const auto held_out = synthetic_captioned("triangle", 16, size, 300);
  auto frozen = std::make_shared<const DenoiserNet>(net);
  SamplerOptions so;
  so.seed = 400;
  const std::string class_prompt = strip_token(subject.front().prompt, prompt_text::kIdentifier);
  const auto prior = generate_prior_set(*frozen, vocab, class_prompt, 24, schedule, so);

  FinetuneConfig fc;
  fc.seed = 5;
  const FinetuneResult ft =
      finetune(attach_lora(frozen, default_lora_targets(*frozen, fc.rank), fc.rank, fc.alpha, 6),
               vocab, subject, prior, schedule, fc);

  const double base_val = validation_loss(*frozen, vocab, held_out, schedule, 32);
  const double tuned_val = validation_loss(ft.model, ft.vocab, held_out, schedule, 32);
  const double gain = 1.0 - tuned_val / base_val;
  o.check(gain >= 0.10, str("held-out improvement ", 100.0 * gain, "% (base ", base_val,
                            ", adapted ", tuned_val, ")"));
  const double secs = seconds_since(t0);
  o.check(secs < 900.0, str("runtime ", secs, " s"));
  o.note(str("base loss ", first, " -> ", last, "; held-out ", base_val, " -> ", tuned_val, " (",
             100.0 * gain, "% better); ", base_secs, " s base, ", secs, " s total"));
  return o;
}

Outcome img2img_step_law() {
  Outcome o;
  struct Stub {
    int image_size() const { return 4; }
    Image forward(const Image& x, int t, std::span<const double>) const {
      Image out(x.height, x.width);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.05 * x[i] + 1e-4 * t;
      return out;
    }
  } model;
  const std::vector<double> cond = {0.0};
  Rng rng(12);
  const Image init = gaussian_image(4, 4, rng);
  std::string seen;
  for (double strength : {0.0, 0.25, 0.5, 0.9, 0.96, 1.0}) {
    int executed = 0;
    SamplerOptions opts;
    opts.steps = 20;
    opts.on_step = [&](int, int) { ++executed; };
    img2img(model, init, cond, cond, default_schedule(), strength, opts);
    const int expected = static_cast<int>(std::floor(strength * 20 + 1e-9));
    o.check(executed == expected, str("strength ", strength, ": ", executed, " != ", expected));
    seen += str(seen.empty() ? "" : " ", strength, "->", executed);
  }
  o.note(seen);
  return o;
}

Outcome dataset_statistics() {
  Outcome o;
  const ManifestStats s = compute_stats(testing::manifest_from_counts(testing::dataset_counts()));
  auto expect = [&](const char* what, double got, double want) {
    o.check(got == want, str(what, " ", got, " != ", want));
  };
  expect("classes", s.num_classes, 66);
  expect("source total", static_cast<double>(s.source.total), 1029);
  expect("generated total", static_cast<double>(s.generated.total), 7050);
  expect("source median", s.source.median, 12);
  expect("generated median", s.generated.median, 93);
  expect("source max", static_cast<double>(s.source.max), 102);
  expect("generated max", static_cast<double>(s.generated.max), 399);
  expect("source min", static_cast<double>(s.source.min), 9);
  expect("generated min", static_cast<double>(s.generated.min), 12);

  const auto errata = errata_report(s, testing::claimed_stats());
  bool source_mean = false, generated_mean = false;
  for (const auto& d : errata) {
    if (d.statistic != "mean") continue;
    if (d.kind == "source" && d.claimed == 15.4 && std::abs(d.computed - 1029.0 / 66) < 1e-12)
      source_mean = true;
    if (d.kind == "generated" && d.claimed == 123.5 && std::abs(d.computed - 7050.0 / 66) < 1e-12)
      generated_mean = true;
  }
  o.check(source_mean, "source mean 15.4 not flagged against 1029/66");
  o.check(generated_mean, "generated mean 123.5 not flagged against 7050/66");
  o.note(str(errata.size(), " errata entries"));
  return o;
}

Outcome rating_aggregates() {
  Outcome o;
  const ItemSet set = testing::paired_item_set("t1");
  const AggregateReport r = aggregate(
      set, testing::fixture_responses(set, testing::kGeneratedRatings, testing::kSourcedRatings));
  struct Want {
    SourceKind kind;
    int q1, q2;
    std::array<int, 4> q3;
  };
  for (const Want& w : {Want{SourceKind::kGenerated, 10000, 9286, {3214, 3929, 2857, 0}},
                        Want{SourceKind::kSourced, 10000, 9643, {3571, 3929, 2143, 357}}}) {
    const KindReport* k = r.find(w.kind);
    o.check(k != nullptr, str(to_string(w.kind), " missing"));
    if (!k) continue;
    o.check(k->n == 28, str(to_string(w.kind), " n = ", k->n));
    o.check(k->q1_yes == w.q1, str(to_string(w.kind), " q1 ", format_hundredths(k->q1_yes)));
    o.check(k->q2_yes == w.q2, str(to_string(w.kind), " q2 ", format_hundredths(k->q2_yes)));
    for (std::size_t i = 0; i < 4; ++i)
      o.check(k->q3[i] == w.q3[i], str(to_string(w.kind), " q3[", i, "] ",
                                       format_hundredths(k->q3[i])));
  }
  o.note("n = 28 per kind");
  return o;
}

Outcome blinding_audit() {
  Outcome o;
  const ItemSet set = testing::paired_item_set("audit");
  o.check(set.items.size() == 56u, str("item set has ", set.items.size(), " items"));
  EvaluationStore store({set});
  httplib::Server server;
  install_routes(server, store);
  server.set_logger([](const httplib::Request&, const httplib::Response&) {});
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(10, 0);

  const auto leaks = testing::leak_strings(set);
  int payloads = 0;
  auto audit = [&](const httplib::Result& res, const std::string& where) -> Json {
    if (!res) {
      o.check(false, where + ": no response");
      return Json();
    }
    ++payloads;
    const Json body = Json::parse(res->body);
    for (const auto& v : testing::blinding_violations(body, leaks)) o.check(false, where + ": " + v);
    return body;
  };

  const Json created = audit(client.Post("/sessions", R"({"label":"audit","item_set":"audit"})",
                                         "application/json"),
                             "create");
  const std::string sid = created.value("session_id", "");
  for (int i = 0; i < 60 && !sid.empty(); ++i) {
    const Json next = audit(client.Get("/sessions/" + sid + "/next"), "next");
    if (next.value("complete", false) || !next.contains("item_id")) break;
    audit(client.Post("/sessions/" + sid + "/responses",
                      Json{{"item_id", next["item_id"]}, {"q1", "maybe"}}.dump(),
                      "application/json"),
          "rejected");
    audit(client.Post("/sessions/" + sid + "/responses",
                      Json{{"item_id", next["item_id"]}, {"q1", true}, {"q2", i % 2 == 0},
                           {"q3", "minor_edits"}}.dump(),
                      "application/json"),
          "ack");
  }
  o.check(store.responses_for_set("audit").size() == 56u, "session did not cover 56 items");
  audit(client.Post("/sessions/" + sid + "/close", "", "application/json"), "close");
  server.stop();
  thread.join();
  o.note(str(payloads, " payloads walked"));
  return o;
}

Outcome prompt_engine() {
  Outcome o;
  const std::string cat = render_prompt("cat", {"whiskers", "eyes", "paws"});
  o.check(cat ==
              "Create a tactile graphic of a cat, specifically designed for individuals with "
              "visual impairments. The graphic should feature raised, smooth lines to delineate "
              "the whiskers, eyes, paws, against a simplistic background to ensure stark contrast.",
          "cat sentence differs: " + cat);
  const std::vector<std::string> pool = {"outline", "handle", "left wing", "base", "stripes"};
  int round_trips = 0;
  for (const auto& c : testing::dataset_counts()) {
    std::string object = c.name;
    for (auto& ch : object) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    for (std::size_t k = 1; k <= pool.size(); ++k) {
      const std::vector<std::string> features(pool.begin(), pool.begin() + static_cast<long>(k));
      const PromptValidation v = validate_prompt(render_prompt(object, features));
      o.check(v.ok && v.object_name == object && v.features == join_features(features),
              str(object, " with ", k, " features: ", v.reason));
      ++round_trips;
    }
  }
  o.note(str(round_trips, " round trips"));
  return o;
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"forward_moments", forward_moments},
      {"reverse_step_oracle", reverse_step_oracle},
      {"inversion", inversion},
      {"gradients", gradients},
      {"lora_contracts", lora_contracts},
      {"dreambooth_loss", dreambooth_loss_criterion},
      {"toy_training", toy_training},
      {"img2img_step_law", img2img_step_law},
      {"dataset_statistics", dataset_statistics},
      {"rating_aggregates", rating_aggregates},
      {"blinding_audit", blinding_audit},
      {"prompt_engine", prompt_engine},
  };
  return all;
}

}  // namespace
}  // namespace tactile

int main(int argc, char** argv) {
  using namespace tactile;
  std::ostringstream quiet;
  notice_stream() = &quiet;

  std::vector<const Criterion*> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string name = argv[i];
    const Criterion* found = nullptr;
    for (const auto& c : criteria())
      if (name == c.name) found = &c;
    if (!found) {
      std::cerr << "unknown criterion '" << name << "'; known:";
      for (const auto& c : criteria()) std::cerr << ' ' << c.name;
      std::cerr << '\n';
      return 2;
    }
    selected.push_back(found);
  }
  if (selected.empty())
    for (const auto& c : criteria()) selected.push_back(&c);

  int failures = 0;
  for (const Criterion* c : selected) {
    Outcome o;
    try {
      o = c->run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (o.pass) {
      std::cout << "PASS " << c->name << (o.detail.empty() ? "" : " (" + o.detail + ")") << '\n';
    } else {
      std::cout << "FAIL " << c->name << ": " << o.detail << '\n';
      ++failures;
    }
    std::cout.flush();
  }
  return failures == 0 ? 0 : 1;
}
