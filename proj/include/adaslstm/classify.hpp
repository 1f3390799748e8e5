#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adaslstm/batch.hpp"
#include "adaslstm/ops.hpp"
#include "adaslstm/params.hpp"
#include "adaslstm/slstm.hpp"

namespace adaslstm {

template <typename T>
struct ClassifierParams {
  Tensor<T> w;  // [3 * hidden, labels]
  Tensor<T> b;  // [labels]

  static ClassifierParams create(ParameterStore<T>& store, std::size_t hidden, std::size_t labels, Rng& rng);
  std::size_t labels() const { return w.cols(); }
};

/// relu([max over words ; mean over words ; g]) per sentence: [sentences, 3 * hidden].
template <typename T>
Tensor<T> pool_head(Tape<T>& tape, const SlstmState<T>& state, const SentenceLayout& layout);

/// Same head over a single padded [rows, hidden] word matrix whose mask marks real words.
template <typename T>
Tensor<T> pool_head(Tape<T>& tape, const Tensor<T>& words, std::span<const std::uint8_t> mask, const Tensor<T>& g);

template <typename T>
Tensor<T> class_logits(Tape<T>& tape, const Tensor<T>& v, const ClassifierParams<T>& params);

/// Smallest index among the maxima.
template <typename T>
std::size_t argmax(std::span<const T> values);

struct Prediction {
  std::vector<double> distribution;
  std::size_t label = 0;
};

/// Softmax distribution and argmax label for every row of `logits`.
template <typename T>
std::vector<Prediction> predict(const Tensor<T>& logits);

}  // namespace adaslstm
