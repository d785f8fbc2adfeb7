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

// Run configuration file shared by the CLI subcommands:
//
//   {
//     "paths":         {"data_root", "output_dir", "adapter_dir"},
//     "base_training": {"lr", "batch_size", "epochs", "cond_dropout", "seed",
//                       "images_per_class", "schedule"},
//     "finetune":      {"lr_unet", "lr_text", "batch_size", "epochs", "repeats",
//                       "prior_weight", "prior_count", "rank", "alpha", "seed",
//                       "train_text", "images"},
//     "generation":    {GenerationConfig fields},
//     "service":       {"host", "port", "log_path"}
//   }
//
// Every block and key is optional; unknown keys are errors. Relative paths are
// resolved against the directory holding the file.

#pragma once

#include <filesystem>
#include <string>

#include "tactile/adapters/serialization.hpp"
#include "tactile/pipeline/generation.hpp"

namespace tactile {

inline constexpr const char* kConfigEnvVar = "TACTILE_CONFIG";

struct PathsConfig {
  std::filesystem::path data_root;
  std::filesystem::path output_dir = ".";
  std::filesystem::path adapter_dir = "adapters";
};

struct BaseTrainingConfig {
  BaseTrainConfig train;
  int images_per_class = 32;
  std::string schedule = "full";  // full (T = 1000) | fast (T = 50)
};

struct FinetuneBlock {
  FinetuneConfig train;
  int prior_count = 200;
  int images = 16;  // synthetic subject images
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path log_path = "eval_events.ndjson";
};

struct RunConfig {
  PathsConfig paths;
  BaseTrainingConfig base;
  FinetuneBlock finetune;
  GenerationConfig generation;
  ServiceConfig service;
};

namespace detail {

template <typename F>
void each_key(const Json& block, const char* name, F&& on_key) {
  require(block.is_object(), "config block '", name, "' must be an object");
  for (const auto& [key, value] : block.items())
    if (!on_key(key, value)) fail("unknown key '", key, "' in config block '", name, "'");
}

}  // namespace detail

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  auto resolve = [&](const Json& v) {
    std::filesystem::path p = v.get<std::string>();
    return p.is_absolute() ? p : (base_dir / p).lexically_normal();
  };
  try {
    detail::each_key(j, "<root>", [&](const std::string& block, const Json& v) {
      if (block == "paths") {
        detail::each_key(v, "paths", [&](const std::string& k, const Json& x) {
          if (k == "data_root") c.paths.data_root = resolve(x);
          else if (k == "output_dir") c.paths.output_dir = resolve(x);
          else if (k == "adapter_dir") c.paths.adapter_dir = resolve(x);
          else return false;
          return true;
        });
      } else if (block == "base_training") {
        auto& b = c.base;
        detail::each_key(v, "base_training", [&](const std::string& k, const Json& x) {
          if (k == "lr") b.train.lr = x.get<double>();
          else if (k == "batch_size") b.train.batch_size = x.get<int>();
          else if (k == "epochs") b.train.epochs = x.get<int>();
          else if (k == "cond_dropout") b.train.cond_dropout = x.get<double>();
          else if (k == "seed") b.train.seed = x.get<std::uint64_t>();
          else if (k == "images_per_class") b.images_per_class = x.get<int>();
          else if (k == "schedule") b.schedule = x.get<std::string>();
          else return false;
          return true;
        });
      } else if (block == "finetune") {
        auto& f = c.finetune;
        detail::each_key(v, "finetune", [&](const std::string& k, const Json& x) {
          if (k == "lr_unet") f.train.lr_unet = x.get<double>();
          else if (k == "lr_text") f.train.lr_text = x.get<double>();
          else if (k == "batch_size") f.train.batch_size = x.get<int>();
          else if (k == "epochs") f.train.epochs = x.get<int>();
          else if (k == "repeats") f.train.repeats = x.get<int>();
          else if (k == "prior_weight") f.train.prior_weight = x.get<double>();
          else if (k == "prior_count") f.prior_count = x.get<int>();
          else if (k == "rank") f.train.rank = x.get<int>();
          else if (k == "alpha") f.train.alpha = x.get<double>();
          else if (k == "seed") f.train.seed = x.get<std::uint64_t>();
          else if (k == "train_text") f.train.train_text = x.get<bool>();
          else if (k == "images") f.images = x.get<int>();
          else return false;
          return true;
        });
        f.train.validate();
      } else if (block == "generation") {
        c.generation = overlay_generation_config(c.generation, v);
      } else if (block == "service") {
        detail::each_key(v, "service", [&](const std::string& k, const Json& x) {
          if (k == "host") c.service.host = x.get<std::string>();
          else if (k == "port") c.service.port = x.get<int>();
          else if (k == "log_path") c.service.log_path = resolve(x);
          else return false;
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const Json::exception& e) {
    fail("malformed run config: ", e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

}  // namespace tactile
