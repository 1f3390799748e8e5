#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adaslstm/embed.hpp"
#include "adaslstm/slstm.hpp"

namespace adaslstm {

enum class DepthStrategy { Hard, Soft, Gumbel };

std::string to_string(DepthStrategy s);
DepthStrategy parse_depth_strategy(const std::string& name);

/// Width of the classifier's hidden layer.
inline constexpr std::size_t kDepthInner = 50;

/// Depth classifier relu(h·W1 + b1)·W2 + b2 and the h0 projection of its inner vector.
template <typename T>
struct DepthClassifierParams {
  Tensor<T> w1;             // [hidden, 50]
  Tensor<T> b1;             // [50]
  Tensor<T> w2;             // [50, L], also the trainable depth embedding
  Tensor<T> b2;             // [L]
  Tensor<T> h0_projection;  // [50, hidden]

  /// w2 and b2 start at zero so every depth begins equally likely.
  static DepthClassifierParams create(ParameterStore<T>& store, std::size_t hidden, std::size_t max_depth, Rng& rng);
  std::size_t max_depth() const { return w2.cols(); }
  DepthEmbedding<T> embedding() const { return {w2}; }
};

template <typename T>
struct DepthLogits {
  Tensor<T> logits;  // [words, L]
  Tensor<T> inner;   // [words, 50], post-ReLU
};

template <typename T>
DepthLogits<T> depth_logits(Tape<T>& tape, const Tensor<T>& h, const DepthClassifierParams<T>& params);

/// Softmax over the depth axis.
template <typename T>
Tensor<T> depth_probs(Tape<T>& tape, const Tensor<T>& logits);

/// 1-based argmax; ties go to the smallest depth.
template <typename T>
std::size_t select_hard(std::span<const T> p);

/// clamp(floor(sum_j j * p_j), 1, L) with j running over 1..L.
template <typename T>
std::size_t select_soft(std::span<const T> p);

/// Independent Gumbel(0, 1) draws, -log(-log u) with u uniform on (0, 1).
std::vector<double> gumbel_noise(std::size_t count, Rng& rng);

/// softmax((logits + noise) / tau).
template <typename T>
std::vector<double> perturbed_softmax(std::span<const T> logits, std::span<const double> noise, double tau);

/// 1-based argmax of (logits + noise) / tau with fresh noise from `rng`.
/// Throws ArgumentError if tau <= 0.
template <typename T>
std::size_t select_gumbel(std::span<const T> logits, double tau, Rng& rng);

/// h0 = inner·projection, no bias.
template <typename T>
Tensor<T> init_h0(Tape<T>& tape, const Tensor<T>& inner, const DepthClassifierParams<T>& params);

template <typename T>
struct DepthAssignment {
  std::vector<std::size_t> depths;        // per packed word, in [1, L]
  std::vector<std::size_t> sentence_max;  // d_max per sentence
  std::size_t batch_max = 0;
  Tensor<T> logits, probs, inner;         // absent for forced assignments

  double mean_depth() const;
  /// Depths of sentence b framed by the padding convention: 0 at both ends.
  std::vector<std::size_t> padded(const SentenceLayout& layout, std::size_t b) const;
};

/// Builds the maxima for given per-word depths; each must lie in [1, max_depth].
template <typename T>
DepthAssignment<T> assignment_from_depths(std::vector<std::size_t> depths, const SentenceLayout& layout,
                                          std::size_t max_depth);

/// Runs the classifier on sequential states `h` and selects a depth per word.
template <typename T>
DepthAssignment<T> compute_assignment(Tape<T>& tape, const Tensor<T>& h, const SentenceLayout& layout,
                                      const DepthClassifierParams<T>& params, DepthStrategy strategy, double tau,
                                      Rng& rng);

/// Layer loop to the batch maximum depth. Word w transitions at layer l only
/// while l <= depths[w] and otherwise carries its state unchanged; a sentence's
/// global node transitions while l <= its d_max. Below half activity the
/// active words are gathered and only they are computed.
template <typename T>
SlstmState<T> adaptive_stack(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout,
                             const DepthAssignment<T>& assignment, const SlstmParams<T>& params,
                             const SlstmState<T>& init, TransitionCounter* counter = nullptr,
                             std::vector<SlstmState<T>>* trace = nullptr);

}  // namespace adaslstm
