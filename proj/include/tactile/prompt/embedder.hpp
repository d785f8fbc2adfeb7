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

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tactile/common.hpp"

namespace tactile {

// Lowercases and splits on non-alphanumeric characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// Embedding rows for prompt tokens: `buckets` hashed rows followed by one
// dedicated row per bound identifier.
class Vocabulary {
 public:
  static constexpr int kDefaultBuckets = 4096;
  static constexpr int kDefaultDim = 64;

  Vocabulary() : Vocabulary(kDefaultDim, kDefaultBuckets, 0) {}

  Vocabulary(int dim, int buckets, std::uint64_t seed) : dim_(dim), buckets_(buckets), seed_(seed) {
    require(dim > 0 && buckets > 0, "vocabulary needs positive dimension and bucket count");
    table_.resize(buckets, dim);
    for (int r = 0; r < buckets; ++r) table_.row(r) = random_row(r);
  }

  int dim() const { return dim_; }
  int buckets() const { return buckets_; }
  std::uint64_t seed() const { return seed_; }
  int rows() const { return static_cast<int>(table_.rows()); }

  // Registers `token` with a dedicated row; re-binding returns the same id.
  int bind_identifier(const std::string& token) {
    require(!token.empty(), "identifier token is empty");
    const auto normalized = tokenize(token);
    require(normalized.size() == 1 && normalized.front() == token,
            "identifier '", token, "' must be a single lowercase alphanumeric token");
    if (auto it = bound_.find(token); it != bound_.end()) return it->second;
    const int id = rows();
    table_.conservativeResize(id + 1, Eigen::NoChange);
    table_.row(id) = random_row(id);
    bound_.emplace(token, id);
    return id;
  }

  bool is_bound(const std::string& token) const { return bound_.count(token) != 0; }
  const std::map<std::string, int>& bound() const { return bound_; }

  int row_for(const std::string& token) const {
    if (auto it = bound_.find(token); it != bound_.end()) return it->second;
    return static_cast<int>(fnv1a(token) % static_cast<std::uint64_t>(buckets_));
  }

  Eigen::MatrixXd& table() { return table_; }
  const Eigen::MatrixXd& table() const { return table_; }

  // Restores a serialized table; rows beyond `buckets` belong to `bound`.
  static Vocabulary restore(int dim, int buckets, std::uint64_t seed, Eigen::MatrixXd table,
                            std::map<std::string, int> bound) {
    Vocabulary v(1, 1, seed);
    v.dim_ = dim;
    v.buckets_ = buckets;
    require(table.cols() == dim && table.rows() == buckets + static_cast<int>(bound.size()),
            "vocabulary table shape does not match its header");
    v.table_ = std::move(table);
    v.bound_ = std::move(bound);
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.dim_ == b.dim_ && a.buckets_ == b.buckets_ && a.bound_ == b.bound_ &&
           a.table_ == b.table_;
  }

 private:
  Eigen::RowVectorXd random_row(int r) const {
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(r)));
    Eigen::RowVectorXd row(dim_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (int i = 0; i < dim_; ++i) row(i) = scale * rng.normal();
    return row;
  }

  int dim_;
  int buckets_;
  std::uint64_t seed_;
  Eigen::MatrixXd table_;
  std::map<std::string, int> bound_;
};

// Bag of rows with multiplicities; the sorted order fixes the summation order.
using TokenBag = std::map<int, int>;

struct PromptEmbedding {
  Eigen::VectorXd vector;  // unit norm
  TokenBag bag;
  double norm = 0.0;  // norm of the unnormalized sum
};

inline TokenBag token_bag(std::string_view text, const Vocabulary& vocab) {
  TokenBag bag;
  for (const auto& tok : tokenize(text)) ++bag[vocab.row_for(tok)];
  return bag;
}

inline PromptEmbedding embed_prompt_traced(std::string_view text, const Vocabulary& vocab) {
  require(!text.empty(), "cannot embed an empty prompt");
  PromptEmbedding e;
  e.bag = token_bag(text, vocab);
  require(!e.bag.empty(), "prompt has no tokens: \"", text, "\"");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(vocab.dim());
  for (const auto& [row, count] : e.bag) sum += count * vocab.table().row(row).transpose();
  e.norm = sum.norm();
  require(e.norm > 0.0, "prompt embedding is degenerate");
  e.vector = sum / e.norm;
  return e;
}

inline Eigen::VectorXd embed_prompt(std::string_view text, const Vocabulary& vocab) {
  return embed_prompt_traced(text, vocab).vector;
}

// Accumulates d(loss)/d(table row) into `grads` given d(loss)/d(unit vector).
inline void embedding_backward(const PromptEmbedding& e, const Eigen::VectorXd& grad_vector,
                               std::map<int, Eigen::VectorXd>& grads) {
  const Eigen::VectorXd grad_sum =
      (grad_vector - e.vector * e.vector.dot(grad_vector)) / e.norm;
  for (const auto& [row, count] : e.bag) {
    auto [it, inserted] = grads.try_emplace(row, Eigen::VectorXd::Zero(grad_sum.size()));
    it->second += count * grad_sum;
  }
}

// Removes every occurrence of the identifier token (case-insensitive, whole
// word). Used to build class prompts for prior-preservation samples.
inline std::string strip_token(std::string_view text, std::string_view token) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalnum(static_cast<unsigned char>(text[i]))) {
      out.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    std::string word(text.substr(i, j - i));
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (word != token) out.append(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace tactile
