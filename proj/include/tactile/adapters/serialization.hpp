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

// JSON archives for base checkpoints and LoRA adapters. Doubles are written in
// shortest round-trip form, so save/load is lossless.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "tactile/adapters/training.hpp"
#include "tactile/diffusion/schedule.hpp"

namespace tactile {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointFormat = "tactile-checkpoint/1";
inline constexpr const char* kAdapterFormat = "tactile-adapter/1";

inline Json matrix_to_json(const Matrix& m) {
  Json values = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

inline Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& values = j.at("values");
  require(rows >= 0 && cols >= 0 && values.size() == static_cast<std::size_t>(rows * cols),
          "matrix entry has ", values.size(), " values for shape ", rows, "x", cols);
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  return m;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '", path.string(), "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail("malformed JSON in '", path.string(), "': ", e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot write '", path.string(), "'");
  out << text;
  require(out.good(), "failed writing '", path.string(), "'");
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

// ---------------------------------------------------------------------------

inline Json to_json(const DenoiserConfig& c) {
  return Json{{"image_size", c.image_size},         {"cond_dim", c.cond_dim},
              {"emb_dim", c.emb_dim},               {"num_steps", c.num_steps},
              {"level1_channels", c.level1_channels}, {"level2_channels", c.level2_channels},
              {"level3_channels", c.level3_channels}};
}

inline DenoiserConfig denoiser_config_from_json(const Json& j) {
  DenoiserConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.cond_dim = j.at("cond_dim").get<int>();
  c.emb_dim = j.at("emb_dim").get<int>();
  c.num_steps = j.at("num_steps").get<int>();
  c.level1_channels = j.at("level1_channels").get<int>();
  c.level2_channels = j.at("level2_channels").get<int>();
  c.level3_channels = j.at("level3_channels").get<int>();
  return c;
}

// The seeded table is regenerated on load; only rows that differ from it are
// stored.
inline Vocabulary seeded_vocabulary(int dim, int buckets, std::uint64_t seed,
                                    const std::map<std::string, int>& bound) {
  Vocabulary v(dim, buckets, seed);
  std::vector<std::pair<int, std::string>> by_row;
  for (const auto& [token, row] : bound) by_row.emplace_back(row, token);
  std::sort(by_row.begin(), by_row.end());
  for (const auto& [row, token] : by_row)
    require(v.bind_identifier(token) == row, "identifier '", token, "' has a non-sequential row");
  return v;
}

inline Json to_json(const Vocabulary& v) {
  Json bound = Json::object();
  for (const auto& [token, row] : v.bound()) bound[token] = row;
  const Vocabulary seeded = seeded_vocabulary(v.dim(), v.buckets(), v.seed(), v.bound());
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < v.table().rows(); ++r) {
    if (v.table().row(r) == seeded.table().row(r)) continue;
    const Eigen::RowVectorXd row = v.table().row(r);
    rows.push_back(Json{{"row", r}, {"values", std::vector<double>(row.begin(), row.end())}});
  }
  return Json{{"dim", v.dim()},
              {"buckets", v.buckets()},
              {"seed", v.seed()},
              {"bound", std::move(bound)},
              {"modified_rows", std::move(rows)}};
}

inline Vocabulary vocabulary_from_json(const Json& j) {
  std::map<std::string, int> bound;
  for (const auto& [token, row] : j.at("bound").items()) bound.emplace(token, row.get<int>());
  Vocabulary v = seeded_vocabulary(j.at("dim").get<int>(), j.at("buckets").get<int>(),
                                   j.at("seed").get<std::uint64_t>(), bound);
  for (const auto& e : j.at("modified_rows")) {
    const int r = e.at("row").get<int>();
    const auto values = e.at("values").get<std::vector<double>>();
    require(r >= 0 && r < v.rows() && static_cast<int>(values.size()) == v.dim(),
            "vocabulary row ", r, " does not fit the table");
    v.table().row(r) = Eigen::Map<const Eigen::RowVectorXd>(values.data(), v.dim());
  }
  return v;
}

// Base network plus the text embedder and schedule it was trained with.
struct Checkpoint {
  DenoiserNet net;
  Vocabulary vocab;
  std::string schedule_id;
  Json training;  // free-form training metadata (config, per-epoch loss)
};

inline Json checkpoint_to_json(const Checkpoint& ck) {
  Json params = Json::array();
  for (const auto& [name, value] : ck.net.params())
    params.push_back(Json{{"name", name}, {"tensor", matrix_to_json(value)}});
  return Json{{"format", kCheckpointFormat},
              {"config", to_json(ck.net.config())},
              {"schedule_id", ck.schedule_id},
              {"training", ck.training},
              {"vocabulary", to_json(ck.vocab)},
              {"parameters", std::move(params)}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  require(j.value("format", "") == kCheckpointFormat, "not a checkpoint file (format '",
          j.value("format", ""), "')");
  try {
    ParameterSet params;
    for (const auto& p : j.at("parameters")) {
      const Matrix m = matrix_from_json(p.at("tensor"));
      params.add(p.at("name").get<std::string>(), m.rows(), m.cols()) = m;
    }
    Checkpoint ck{DenoiserNet::from_parameters(denoiser_config_from_json(j.at("config")),
                                               std::move(params)),
                  vocabulary_from_json(j.at("vocabulary")),
                  j.at("schedule_id").get<std::string>(), j.value("training", Json::object())};
    return ck;
  } catch (const Json::exception& e) {
    fail("malformed checkpoint: ", e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_json_file(path, checkpoint_to_json(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------

inline Json to_json(const FinetuneConfig& c) {
  return Json{{"lr_unet", c.lr_unet},   {"lr_text", c.lr_text},
              {"batch_size", c.batch_size}, {"epochs", c.epochs},
              {"repeats", c.repeats},   {"prior_weight", c.prior_weight},
              {"rank", c.rank},         {"alpha", c.alpha},
              {"seed", c.seed},         {"train_text", c.train_text}};
}

struct AdapterMetadata {
  std::string class_name;
  Json config;  // FinetuneConfig snapshot
  std::string schedule_id;
  std::uint64_t creation_seed = 0;
  std::uint64_t base_checksum = 0;
  std::vector<double> epoch_loss;

  friend bool operator==(const AdapterMetadata&, const AdapterMetadata&) = default;
};

// Adapter set as stored on disk: LoRA factors, updated text rows, metadata.
struct AdapterArchive {
  std::vector<LoraAdapter> adapters;
  std::map<int, Eigen::VectorXd> text_rows;
  AdapterMetadata metadata;

  friend bool operator==(const AdapterArchive&, const AdapterArchive&) = default;
};

// Rows of `tuned` that differ from `original`.
inline std::map<int, Eigen::VectorXd> changed_rows(const Vocabulary& original,
                                                   const Vocabulary& tuned) {
  require(original.table().rows() == tuned.table().rows() &&
              original.table().cols() == tuned.table().cols(),
          "vocabularies differ in shape");
  std::map<int, Eigen::VectorXd> rows;
  for (Eigen::Index r = 0; r < tuned.table().rows(); ++r)
    if (original.table().row(r) != tuned.table().row(r))
      rows.emplace(static_cast<int>(r), tuned.table().row(r).transpose());
  return rows;
}

inline Vocabulary apply_text_rows(Vocabulary vocab, const std::map<int, Eigen::VectorXd>& rows) {
  for (const auto& [row, values] : rows) {
    require(row >= 0 && row < vocab.rows() && values.size() == vocab.dim(),
            "adapter text row ", row, " does not fit the vocabulary");
    vocab.table().row(row) = values.transpose();
  }
  return vocab;
}

inline Json adapter_archive_to_json(const AdapterArchive& a) {
  Json adapters = Json::array();
  for (const auto& ad : a.adapters)
    adapters.push_back(Json{{"target_name", ad.target_name},
                            {"rank", ad.rank},
                            {"alpha", ad.alpha},
                            {"A", matrix_to_json(ad.A)},
                            {"B", matrix_to_json(ad.B)}});
  Json rows = Json::array();
  for (const auto& [row, values] : a.text_rows)
    rows.push_back(Json{{"row", row}, {"values", std::vector<double>(values.begin(), values.end())}});
  const auto& m = a.metadata;
  return Json{{"format", kAdapterFormat},
              {"metadata",
               {{"class_name", m.class_name},
                {"config", m.config},
                {"schedule_id", m.schedule_id},
                {"creation_seed", m.creation_seed},
                {"base_checksum", m.base_checksum},
                {"scale_convention", "alpha/rank"},
                {"epoch_loss", m.epoch_loss}}},
              {"adapters", std::move(adapters)},
              {"text_rows", std::move(rows)}};
}

inline AdapterArchive adapter_archive_from_json(const Json& j) {
  require(j.value("format", "") == kAdapterFormat, "not an adapter file (format '",
          j.value("format", ""), "')");
  try {
    AdapterArchive a;
    for (const auto& e : j.at("adapters")) {
      LoraAdapter ad;
      ad.target_name = e.at("target_name").get<std::string>();
      ad.rank = e.at("rank").get<int>();
      ad.alpha = e.at("alpha").get<double>();
      ad.A = matrix_from_json(e.at("A"));
      ad.B = matrix_from_json(e.at("B"));
      require(ad.rank >= 1 && ad.A.cols() == ad.rank && ad.B.rows() == ad.rank,
              "adapter '", ad.target_name, "' has inconsistent rank");
      a.adapters.push_back(std::move(ad));
    }
    for (const auto& e : j.at("text_rows")) {
      const auto values = e.at("values").get<std::vector<double>>();
      a.text_rows.emplace(e.at("row").get<int>(),
                          Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()));
    }
    const auto& m = j.at("metadata");
    a.metadata.class_name = m.at("class_name").get<std::string>();
    a.metadata.config = m.at("config");
    a.metadata.schedule_id = m.at("schedule_id").get<std::string>();
    a.metadata.creation_seed = m.at("creation_seed").get<std::uint64_t>();
    a.metadata.base_checksum = m.at("base_checksum").get<std::uint64_t>();
    a.metadata.epoch_loss = m.at("epoch_loss").get<std::vector<double>>();
    return a;
  } catch (const Json::exception& e) {
    fail("malformed adapter file: ", e.what());
  }
}

inline void save_adapter(const std::filesystem::path& path, const AdapterArchive& a) {
  write_json_file(path, adapter_archive_to_json(a));
}

inline AdapterArchive load_adapter(const std::filesystem::path& path) {
  return adapter_archive_from_json(read_json_file(path));
}

// Rebuilds the adapted model and tuned vocabulary from an archive.
inline std::pair<AdaptedModel, Vocabulary> instantiate_adapter(const Checkpoint& base,
                                                               const AdapterArchive& archive) {
  require(archive.metadata.base_checksum == base.net.params().checksum(),
          "adapter was trained against a different base checkpoint");
  auto net = std::make_shared<const DenoiserNet>(base.net);
  return {AdaptedModel(std::move(net), archive.adapters),
          apply_text_rows(base.vocab, archive.text_rows)};
}

}  // namespace tactile
