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

// tactile: command-line front end.
//
// Exit codes: 0 success, 1 user error (bad flags, bad input), 2 internal error.

#include <csignal>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tactile/adapters/lora.hpp"
#include "tactile/adapters/serialization.hpp"
#include "tactile/adapters/training.hpp"
#include "tactile/cli/run_config.hpp"
#include "tactile/data/loaders.hpp"
#include "tactile/data/manifest.hpp"
#include "tactile/eval/evaluation.hpp"
#include "tactile/eval/server.hpp"
#include "tactile/pipeline/generation.hpp"

namespace fs = std::filesystem;
using namespace tactile;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

NoiseSchedule schedule_by_name(const std::string& name) {
  if (name == "full") return default_schedule();
  if (name == "fast") return fast_schedule();
  fail("unknown schedule '", name, "' (expected full or fast)");
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// --config (or the environment variable) is needed before flags are bound so
// that flags can override file values.
std::optional<fs::path> find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return fs::path(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return fs::path(a.substr(9));
  }
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return fs::path(env);
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void print_stats(const ManifestStats& s) {
  auto row = [](const char* kind, const CountStats& c) {
    std::cout << std::left << std::setw(10) << kind << "total " << c.total << "  mean "
              << fixed(c.mean, 1) << "  median " << number(c.median) << "  max " << c.max
              << "  min " << c.min << '\n';
  };
  std::cout << "classes " << s.num_classes << '\n';
  row("source", s.source);
  row("generated", s.generated);
}

int cmd_ingest(const fs::path& root, const fs::path& out) {
  const Manifest m = ingest(root);
  save_manifest(out, m);
  const auto s = compute_stats(m);
  std::cout << "ingested " << s.num_classes << " classes (" << s.source.total << " source, "
            << s.generated.total << " generated) -> " << out.string() << '\n';
  return 0;
}

int cmd_stats(const fs::path& manifest_path, const std::string& claimed_path) {
  const Manifest m = load_manifest(manifest_path);
  const ManifestStats s = compute_stats(m);
  print_stats(s);
  if (!claimed_path.empty()) {
    const auto errata = errata_report(s, manifest_stats_from_json(read_json_file(claimed_path)));
    std::cout << "errata " << errata.size() << '\n';
    for (const auto& d : errata)
      std::cout << "  " << d.kind << ' ' << d.statistic << ": computed " << number(d.computed)
                << ", claimed " << number(d.claimed) << '\n';
  }
  return 0;
}

struct TrainBaseArgs {
  fs::path out;
  fs::path data_root;
  std::string classes = "circle,square,cross,diamond";
  int image_size = 32;
  std::uint64_t model_seed = 1;
  fs::path log;
};

int cmd_train_base(const TrainBaseArgs& a, const BaseTrainingConfig& cfg) {
  std::vector<CaptionedImage> data;
  std::vector<std::string> classes;
  if (!a.data_root.empty()) {
    const Manifest m = ingest(a.data_root);
    for (const auto& c : m.classes) classes.push_back(c.class_name);
    data = manifest_captioned(a.data_root, m, a.image_size);
  } else {
    classes = split_csv(a.classes);
    require(!classes.empty(), "no training classes given");
    require(cfg.images_per_class >= 1, "images_per_class must be positive");
    for (const auto& c : classes) {
      auto part = synthetic_captioned(c, cfg.images_per_class, a.image_size, cfg.train.seed);
      data.insert(data.end(), part.begin(), part.end());
    }
  }
  const NoiseSchedule schedule = schedule_by_name(cfg.schedule);
  DenoiserConfig dc;
  dc.image_size = a.image_size;
  dc.num_steps = schedule.num_steps();
  DenoiserNet net(dc, a.model_seed);
  Vocabulary vocab(dc.cond_dim, Vocabulary::kDefaultBuckets, derive_seed(a.model_seed, 0x70CA));
  vocab.bind_identifier(std::string(prompt_text::kIdentifier));

  const TrainingLog log = train_base(net, vocab, data, schedule, cfg.train, [](int e, double l) {
    std::cout << "epoch " << e << " loss " << number(l) << '\n' << std::flush;
  });

  Json epochs = Json::array();
  for (std::size_t i = 0; i < log.epoch_loss.size(); ++i)
    epochs.push_back(Json{{"epoch", i + 1}, {"loss", log.epoch_loss[i]}});
  const Json training{{"classes", classes},
                      {"images", data.size()},
                      {"lr", cfg.train.lr},
                      {"batch_size", cfg.train.batch_size},
                      {"epochs", cfg.train.epochs},
                      {"cond_dropout", cfg.train.cond_dropout},
                      {"seed", cfg.train.seed},
                      {"model_seed", a.model_seed},
                      {"epoch_loss", epochs}};
  save_checkpoint(a.out, Checkpoint{std::move(net), std::move(vocab), schedule.id(), training});
  const fs::path log_path = a.log.empty() ? fs::path(a.out.string() + ".log.json") : a.log;
  write_json_file(log_path, Json{{"epochs", epochs}});
  std::cout << "checkpoint -> " << a.out.string() << '\n';
  return 0;
}

struct FinetuneArgs {
  fs::path checkpoint;
  std::string class_name;
  fs::path out;
  fs::path data_root;
  std::string targets;
  std::uint64_t data_seed = 12;
};

int cmd_finetune(const FinetuneArgs& a, const FinetuneBlock& cfg) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const NoiseSchedule schedule = schedule_from_id(ck.schedule_id);
  const int size = ck.net.image_size();

  std::vector<CaptionedImage> subject;
  if (!a.data_root.empty()) {
    const Manifest m = ingest(a.data_root);
    require(m.find(a.class_name) != nullptr, "class '", a.class_name, "' is not in the dataset");
    subject = manifest_captioned(a.data_root, m, size, a.class_name);
  } else {
    require(synthetic::is_shape_class(a.class_name), "unknown class '", a.class_name,
            "' (synthetic classes: circle, square, cross, diamond, triangle, ring)");
    require(cfg.images >= 1, "finetune needs at least one subject image");
    subject = synthetic_captioned(a.class_name, cfg.images, size, a.data_seed);
  }

  auto base = std::make_shared<const DenoiserNet>(ck.net);
  const auto targets =
      a.targets.empty() ? default_lora_targets(*base, cfg.train.rank) : split_csv(a.targets);
  require(!targets.empty(), "no LoRA target admits rank ", cfg.train.rank);
  const std::uint64_t creation_seed = derive_seed(cfg.train.seed, 0xADA7);
  AdaptedModel model = attach_lora(base, targets, cfg.train.rank, cfg.train.alpha, creation_seed);

  std::vector<CaptionedImage> prior;
  if (cfg.train.prior_weight > 0.0) {
    require(cfg.prior_count >= 1, "prior_weight > 0 needs prior_count >= 1");
    const std::string class_prompt =
        strip_token(subject.front().prompt, prompt_text::kIdentifier);
    SamplerOptions so;
    so.seed = derive_seed(cfg.train.seed, 0x9910);
    std::cout << "sampling " << cfg.prior_count << " prior images\n" << std::flush;
    prior = generate_prior_set(*base, ck.vocab, class_prompt, cfg.prior_count, schedule, so);
  }

  const FinetuneResult r = finetune(model, ck.vocab, subject, prior, schedule, cfg.train,
                                    [](int e, double l) {
                                      std::cout << "epoch " << e << " loss " << number(l) << '\n'
                                                << std::flush;
                                    });
  AdapterArchive archive;
  archive.adapters = r.model.adapters();
  archive.text_rows = changed_rows(ck.vocab, r.vocab);
  Json config = to_json(cfg.train);
  config["prior_count"] = cfg.prior_count;
  config["targets"] = targets;
  archive.metadata = {a.class_name,          config, ck.schedule_id, creation_seed,
                      ck.net.params().checksum(), r.log.epoch_loss};
  const fs::path out = a.out.empty() ? fs::path("adapters") / (a.class_name + ".json") : a.out;
  save_adapter(out, archive);
  std::cout << "adapter (" << r.model.trainable_count() << " trainable values) -> "
            << out.string() << '\n';
  return 0;
}

struct GenerateArgs {
  fs::path checkpoint;
  fs::path adapter;
  std::string class_name;
  std::string features;
  std::string paraphrase;
  std::string mode = "text";
  fs::path init;
  fs::path out;
  fs::path class_config;
  std::vector<std::string> add_negative;
  std::vector<std::string> drop_keyword;
};

int cmd_generate(const GenerateArgs& a, GenerationConfig config) {
  const GenerationMode mode = parse_generation_mode(a.mode);
  if (mode == GenerationMode::kImg2Img)
    require(!a.init.empty(), "img2img mode requires --init");
  else
    require(a.init.empty(), "--init is only valid with --mode img2img");

  std::vector<std::string> features = split_csv(a.features);
  if (features.empty()) {
    require(synthetic::is_shape_class(a.class_name), "class '", a.class_name,
            "' needs --features");
    features = shape_class(a.class_name).features;
  }
  PromptRecord prompt = make_prompt_record(a.class_name, features);
  if (!a.paraphrase.empty()) prompt = register_paraphrase(prompt, a.paraphrase);
  for (const auto& k : a.drop_keyword)
    prompt = apply_prompt_edit(prompt, config, PromptEdit::drop_keyword(k)).prompt;
  for (const auto& t : a.add_negative)
    config = apply_prompt_edit(prompt, config, PromptEdit::add_negative(t)).patch.apply(config);

  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const NoiseSchedule schedule = schedule_from_id(ck.schedule_id);
  std::optional<Image> init;
  if (mode == GenerationMode::kImg2Img) init = read_png(a.init);

  const fs::path out = a.out.empty() ? fs::path("generated") / a.class_name : a.out;
  GenerationResult result;
  if (!a.adapter.empty()) {
    const std::string text = read_json_file(a.adapter).dump();
    const AdapterArchive archive = adapter_archive_from_json(Json::parse(text));
    auto [model, vocab] = instantiate_adapter(ck, archive);
    const std::string id = archive.metadata.class_name + ":" + hex_id(fnv1a(text));
    result = generate_batch(model, vocab, schedule, prompt, config, mode, init, id);
  } else {
    result = generate_batch(ck.net, ck.vocab, schedule, prompt, config, mode, init, "none");
  }
  write_generation(out, result);
  std::cout << result.images.size() << " images -> " << out.string() << '\n';
  return 0;
}

struct FilterArgs {
  fs::path queue;
  fs::path register_dir;
  std::string image;
  std::string decision;
  std::string role = "non-expert";
  bool stats = false;
};

int cmd_filter(const FilterArgs& a) {
  FilterQueue q = replay_filter_log(a.queue);
  bool acted = false;
  if (!a.register_dir.empty()) {
    const RunManifest run = run_manifest_from_json(read_json_file(a.register_dir / "run_manifest.json"));
    std::size_t added = 0;
    for (const auto& f : run.files) {
      const std::string id = (a.register_dir / f).generic_string();
      if (q.contains(id)) continue;
      append_line(a.queue, filter_image_line(id));
      q.add_image(id);
      ++added;
    }
    std::cout << "registered " << added << " images\n";
    acted = true;
  }
  if (!a.image.empty() || !a.decision.empty()) {
    require(!a.image.empty() && !a.decision.empty(), "--image and --decision go together");
    FilterDecision d{a.image, parse_verdict(a.decision), parse_role(a.role), now_timestamp()};
    q.record(d);
    append_line(a.queue, filter_event_line(d));
    std::cout << "recorded " << a.decision << " for " << a.image << " (" << a.role << ")\n";
    acted = true;
  }
  if (a.stats || !acted) {
    const RetentionStats s = q.retention_stats(parse_role(a.role));
    std::cout << "generated " << s.generated << "\nretained " << s.retained << "\nratio "
              << (s.ratio ? fixed(*s.ratio, 4) : std::string("undefined")) << '\n';
  }
  return 0;
}

struct BuildItemsArgs {
  fs::path manifest;
  fs::path refs;
  fs::path generated;
  fs::path sourced;
  std::string set_id = "default";
  fs::path out;
};

int cmd_build_items(const BuildItemsArgs& a) {
  const ItemSet set =
      build_item_set(a.set_id, load_manifest(a.manifest), a.refs, a.generated, a.sourced);
  save_item_set(a.out, set);
  std::cout << set.items.size() << " items -> " << a.out.string() << '\n';
  return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::vector<std::string>& item_sets, const ServiceConfig& svc,
              std::uint64_t seed) {
  std::vector<ItemSet> sets;
  for (const auto& p : item_sets) sets.push_back(load_item_set(p));
  EvaluationStore store(std::move(sets), svc.log_path, seed);
  httplib::Server server;
  install_routes(server, store);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving on " << svc.host << ':' << svc.port << " (log " << svc.log_path.string()
            << ")\n" << std::flush;
  const bool ok = server.listen(svc.host, svc.port);
  g_server = nullptr;
  require(ok || !server.is_running(), "cannot listen on ", svc.host, ":", svc.port);
  return 0;
}

struct ReportArgs {
  fs::path item_set;
  std::string set_id;
  std::string format = "csv";
  fs::path out;
};

int cmd_report(const ReportArgs& a, const ServiceConfig& svc) {
  ItemSet set = load_item_set(a.item_set);
  const std::string id = a.set_id.empty() ? set.id : a.set_id;
  require(fs::exists(svc.log_path), "event log '", svc.log_path.string(), "' does not exist");
  std::vector<ItemSet> sets;
  sets.push_back(std::move(set));
  EvaluationStore store(std::move(sets), svc.log_path);
  const ReportFormat format = parse_report_format(a.format);
  const std::string text = export_report(store.report(id), format);
  const fs::path out = a.out.empty() ? fs::path("report." + a.format) : a.out;
  write_text_file(out, text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig rc;
  try {
    if (auto path = find_config_path(argc, argv)) rc = load_run_config(*path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App app{"Tactile graphics toolkit: datasets, diffusion training, generation, evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 std::string("Run config file (JSON); defaults to $") + kConfigEnvVar);

  fs::path data_root = rc.paths.data_root;
  fs::path output_dir = rc.paths.output_dir;
  fs::path adapter_dir = rc.paths.adapter_dir;

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Scan a dataset tree and write a manifest");
  fs::path ingest_out;
  ingest_cmd->add_option("--root", data_root, "Dataset root: <root>/<class>/{source,generated}");
  ingest_cmd->add_option("--out", ingest_out, "Manifest file (default <output_dir>/manifest.json)");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Print per-kind statistics and errata");
  fs::path stats_manifest;
  std::string claimed;
  stats_cmd->add_option("--manifest", stats_manifest, "Manifest file")->required();
  stats_cmd->add_option("--claimed", claimed, "Claimed statistics (JSON) to check against");

  // train-base
  auto* train_cmd = app.add_subcommand("train-base", "Train the base denoiser");
  TrainBaseArgs tb;
  BaseTrainingConfig base = rc.base;
  train_cmd->add_option("--out", tb.out, "Checkpoint file (default <output_dir>/base.json)");
  train_cmd->add_option("--data-root", tb.data_root, "Train on a dataset tree instead of shapes");
  train_cmd->add_option("--classes", tb.classes, "Synthetic classes, comma separated");
  train_cmd->add_option("--images-per-class", base.images_per_class, "Synthetic images per class");
  train_cmd->add_option("--image-size", tb.image_size, "Image side length (multiple of 4)");
  train_cmd->add_option("--epochs", base.train.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", base.train.batch_size, "Batch size");
  train_cmd->add_option("--lr", base.train.lr, "Learning rate");
  train_cmd->add_option("--cond-dropout", base.train.cond_dropout, "Null-condition probability");
  train_cmd->add_option("--seed", base.train.seed, "Data and noise seed");
  train_cmd->add_option("--model-seed", tb.model_seed, "Weight initialisation seed");
  train_cmd->add_option("--schedule", base.schedule, "Noise schedule: full or fast");
  train_cmd->add_option("--log", tb.log, "Training log file (default <out>.log.json)");

  // finetune
  auto* ft_cmd = app.add_subcommand("finetune", "Fit a LoRA adapter for one class");
  FinetuneArgs fa;
  FinetuneBlock ft = rc.finetune;
  ft_cmd->add_option("--checkpoint", fa.checkpoint, "Base checkpoint")->required();
  ft_cmd->add_option("--class", fa.class_name, "Subject class")->required();
  ft_cmd->add_option("--out", fa.out, "Adapter file (default <adapter_dir>/<class>.json)");
  ft_cmd->add_option("--data-root", fa.data_root, "Dataset tree with the subject class");
  ft_cmd->add_option("--images", ft.images, "Synthetic subject images");
  ft_cmd->add_option("--targets", fa.targets, "LoRA targets, comma separated (default: auto)");
  ft_cmd->add_option("--epochs", ft.train.epochs, "Epochs");
  ft_cmd->add_option("--repeats", ft.train.repeats, "Subject passes per epoch");
  ft_cmd->add_option("--batch-size", ft.train.batch_size, "Batch size");
  ft_cmd->add_option("--lr-unet", ft.train.lr_unet, "Adapter learning rate");
  ft_cmd->add_option("--lr-text", ft.train.lr_text, "Text embedding learning rate");
  ft_cmd->add_option("--rank", ft.train.rank, "LoRA rank");
  ft_cmd->add_option("--alpha", ft.train.alpha, "LoRA alpha");
  ft_cmd->add_option("--prior-weight", ft.train.prior_weight, "Prior-preservation weight");
  ft_cmd->add_option("--prior-count", ft.prior_count, "Prior-preservation samples");
  ft_cmd->add_option("--seed", ft.train.seed, "Seed");
  ft_cmd->add_option("--train-text", ft.train.train_text, "Update subject embedding rows");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate a batch of tactile graphics");
  GenerateArgs ga;
  GenerationConfig gc = rc.generation;
  gen_cmd->add_option("--checkpoint", ga.checkpoint, "Base checkpoint")->required();
  gen_cmd->add_option("--adapter", ga.adapter, "Adapter file");
  gen_cmd->add_option("--class", ga.class_name, "Object class")->required();
  gen_cmd->add_option("--features", ga.features, "Prompt features, comma separated");
  gen_cmd->add_option("--paraphrase", ga.paraphrase, "Registered paraphrase of the prompt");
  gen_cmd->add_option("--mode", ga.mode, "text or img2img");
  gen_cmd->add_option("--init", ga.init, "Init image (PNG) for img2img");
  gen_cmd->add_option("--out", ga.out, "Output directory (default <output_dir>/generated/<class>)");
  gen_cmd->add_option("--class-config", ga.class_config, "Per-class generation overrides (JSON)");
  gen_cmd->add_option("--add-negative", ga.add_negative, "Append a negative prompt term");
  gen_cmd->add_option("--drop-keyword", ga.drop_keyword, "Remove a feature from the prompt");
  gen_cmd->add_option("--sampler", gc.sampler_name, "ddpm, ddpm_mean or dpmpp_2m_karras");
  gen_cmd->add_option("--steps", gc.steps, "Sampling steps");
  gen_cmd->add_option("--width", gc.width, "Image width");
  gen_cmd->add_option("--height", gc.height, "Image height");
  gen_cmd->add_option("--cfg-scale", gc.cfg_scale, "Guidance scale");
  gen_cmd->add_option("--strength", gc.denoise_strength, "img2img denoising strength");
  gen_cmd->add_option("--negative", gc.negative_prompt, "Negative prompt");
  gen_cmd->add_option("--seed", gc.seed, "Base seed; image i uses seed + i");
  gen_cmd->add_option("--batch-size", gc.batch_size, "Images per batch");
  gen_cmd->add_option("--controlnet-meta", gc.controlnet_meta, "Opaque metadata (not used)");

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Record keep/discard decisions");
  FilterArgs fl;
  filter_cmd->add_option("--queue", fl.queue, "Decision log (default <output_dir>/filter_log.ndjson)");
  filter_cmd->add_option("--register", fl.register_dir, "Add the images of a generation run");
  filter_cmd->add_option("--image", fl.image, "Image id");
  filter_cmd->add_option("--decision", fl.decision, "keep or discard");
  filter_cmd->add_option("--role", fl.role, "non-expert or expert");
  filter_cmd->add_flag("--stats", fl.stats, "Print retention statistics");

  // build-items
  auto* items_cmd = app.add_subcommand("build-items", "Pair references with both sample kinds");
  BuildItemsArgs bi;
  items_cmd->add_option("--manifest", bi.manifest, "Manifest file")->required();
  items_cmd->add_option("--refs", bi.refs, "Natural references: <dir>/<class>/")->required();
  items_cmd->add_option("--generated-dir", bi.generated, "Generated samples: <dir>/<class>/")
      ->required();
  items_cmd->add_option("--sourced-dir", bi.sourced, "Sourced samples: <dir>/<class>/")->required();
  items_cmd->add_option("--set-id", bi.set_id, "Item set id");
  items_cmd->add_option("--out", bi.out, "Item set file")->required();

  // serve-eval
  auto* serve_cmd = app.add_subcommand("serve-eval", "Run the evaluation service");
  ServiceConfig svc = rc.service;
  std::vector<std::string> item_sets;
  std::uint64_t serve_seed = 0;
  serve_cmd->add_option("--item-set", item_sets, "Item set file(s)")->required();
  serve_cmd->add_option("--host", svc.host, "Bind address");
  serve_cmd->add_option("--port", svc.port, "Port");
  serve_cmd->add_option("--log", svc.log_path, "Event log (NDJSON)");
  serve_cmd->add_option("--seed", serve_seed, "Session id seed");

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate responses and export a report");
  ReportArgs ra;
  report_cmd->add_option("--item-set", ra.item_set, "Item set file")->required();
  report_cmd->add_option("--set", ra.set_id, "Item set id (default: the file's id)");
  report_cmd->add_option("--log", svc.log_path, "Event log (NDJSON)");
  report_cmd->add_option("--format", ra.format, "csv or json");
  report_cmd->add_option("--out", ra.out, "Report file (default <output_dir>/report.<format>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? 0 : 1;
  }

  try {
    if (*ingest_cmd) {
      require(!data_root.empty(), "ingest needs --root (or paths.data_root in the config)");
      return cmd_ingest(data_root, ingest_out.empty() ? output_dir / "manifest.json" : ingest_out);
    }
    if (*stats_cmd) return cmd_stats(stats_manifest, claimed);
    if (*train_cmd) {
      if (tb.out.empty()) tb.out = output_dir / "base.json";
      if (tb.data_root.empty() && train_cmd->count("--classes") == 0) tb.data_root = data_root;
      return cmd_train_base(tb, base);
    }
    if (*ft_cmd) {
      if (fa.out.empty()) fa.out = adapter_dir / (fa.class_name + ".json");
      if (fa.data_root.empty()) fa.data_root = data_root;
      return cmd_finetune(fa, ft);
    }
    if (*gen_cmd) {
      // Precedence: built-in defaults < config file < class config < flags.
      if (!ga.class_config.empty()) {
        GenerationConfig merged =
            overlay_generation_config(rc.generation, read_json_file(ga.class_config));
        const Json flags = to_json(gc);
        const Json file = to_json(rc.generation);
        Json overrides = Json::object();
        for (const auto& [k, v] : flags.items())
          if (v != file.at(k)) overrides[k] = v;
        gc = overlay_generation_config(merged, overrides);
      }
      if (ga.out.empty()) ga.out = output_dir / "generated" / ga.class_name;
      return cmd_generate(ga, gc);
    }
    if (*filter_cmd) {
      if (fl.queue.empty()) fl.queue = output_dir / "filter_log.ndjson";
      return cmd_filter(fl);
    }
    if (*items_cmd) return cmd_build_items(bi);
    if (*serve_cmd) return cmd_serve(item_sets, svc, serve_seed);
    if (*report_cmd) {
      if (ra.out.empty()) ra.out = output_dir / ("report." + ra.format);
      return cmd_report(ra, svc);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
