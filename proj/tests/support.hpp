#pragma once

#include <algorithm>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "adaslstm/batch.hpp"
#include "adaslstm/config.hpp"
#include "adaslstm/ops.hpp"
#include "adaslstm/tensor.hpp"

namespace testing {

using adaslstm::Rng;
using adaslstm::Shape;
using adaslstm::Tensor;

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<T> values(adaslstm::shape_size(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(shape, std::move(values), requires_grad);
}

/// Values bounded away from zero, for kinks such as relu and max.
inline Tensor<double> random_away_from_zero(const Shape& shape, Rng& rng, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> values(adaslstm::shape_size(shape));
  for (auto& v : values) v = sign(rng) ? dist(rng) : -dist(rng);
  return Tensor<double>(shape, std::move(values), requires_grad);
}

inline std::vector<std::size_t> random_lengths(Rng& rng, std::size_t sentences, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::vector<std::size_t> offsets{0};
  for (std::size_t b = 0; b < sentences; ++b) offsets.push_back(offsets.back() + len(rng));
  return offsets;
}

/// sum(out * weights) with fixed random weights: a scalar that sees every output coordinate.
template <typename T>
Tensor<T> project(adaslstm::Tape<T>& tape, const Tensor<T>& out, const Tensor<T>& weights) {
  return adaslstm::sum(tape, adaslstm::mul(tape, out, weights));
}

/// Small model settings for fast tests.
inline adaslstm::Config tiny_config() {
  adaslstm::Config c;
  c.word_dim = 6;
  c.char_dim = 4;
  c.hidden = 8;
  c.max_depth = 3;
  c.dropout_embed = 0.0;
  c.dropout_hidden = 0.0;
  c.batch_size = 8;
  c.epochs = 3;
  c.strategy = "hard";
  c.max_positions = 64;
  return c;
}

inline std::vector<std::vector<std::string>> toy_sentences() {
  return {{"the", "cat", "sat"}, {"a", "dog", "ran", "far", "away"}, {"hi"}, {"the", "dog", "sat", "."}};
}

/// Trigger-token task: label "yes" iff the sentence contains the token "zyx".
/// Half of the sentences carry it at a random position among common filler words.
inline std::vector<std::pair<std::string, std::vector<std::string>>> trigger_task(std::size_t n, Rng& rng) {
  std::vector<std::string> filler;
  for (char a = 'a'; a <= 'e'; ++a)
    for (char b = 'a'; b <= 'j'; ++b) filler.push_back(std::string{a, b});
  std::uniform_int_distribution<std::size_t> word(0, filler.size() - 1), len(3, 12);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> tokens(len(rng));
    for (auto& t : tokens) t = filler[word(rng)];
    const bool yes = coin(rng);
    if (yes) tokens[std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng)] = "zyx";
    out.emplace_back(yes ? "yes" : "no", std::move(tokens));
  }
  return out;
}

/// Writes records as label<TAB>text lines.
inline void write_tsv(const std::string& path, const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
  std::ofstream out(path);
  for (const auto& [label, tokens] : rows) {
    out << label << '\t';
    for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
    out << '\n';
  }
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) { return a == b; }

template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.values(), y = b.values();
  return std::equal(x.begin(), x.end(), y.begin());
}

}  // namespace testing
