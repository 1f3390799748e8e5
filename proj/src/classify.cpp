#include "adaslstm/classify.hpp"

#include <algorithm>
#include <cmath>

#include "adaslstm/errors.hpp"

namespace adaslstm {

template <typename T>
ClassifierParams<T> ClassifierParams<T>::create(ParameterStore<T>& store, std::size_t hidden, std::size_t labels,
                                                Rng& rng) {
  if (labels < 2) throw ArgumentError("classifier needs at least two labels");
  ClassifierParams p;
  p.w = store.create("cls.w", {3 * hidden, labels}, Init::Xavier, rng);
  p.b = store.create("cls.b", {labels}, Init::Zeros, rng);
  return p;
}

template <typename T>
Tensor<T> pool_head(Tape<T>& tape, const SlstmState<T>& state, const SentenceLayout& layout) {
  const std::span<const std::size_t> offsets(layout.offsets);
  auto v = concat<T>(tape, {segment_max(tape, state.h, offsets), segment_mean(tape, state.h, offsets), state.g}, 1);
  return relu(tape, v);
}

template <typename T>
Tensor<T> pool_head(Tape<T>& tape, const Tensor<T>& words, std::span<const std::uint8_t> mask, const Tensor<T>& g) {
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ArgumentError("pool_head: no real words");
  }
  auto v = concat<T>(tape, {max_pool(tape, words, mask), mean_pool(tape, words, mask), reshape(tape, g, {g.size()})}, 0);
  return relu(tape, v);
}

template <typename T>
Tensor<T> class_logits(Tape<T>& tape, const Tensor<T>& v, const ClassifierParams<T>& params) {
  return linear(tape, v, params.w, params.b);
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

template <typename T>
std::vector<Prediction> predict(const Tensor<T>& logits) {
  const std::size_t rows = logits.rows(), k = logits.cols();
  std::vector<Prediction> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = logits.values().subspan(r * k, k);
    const double top = static_cast<double>(*std::max_element(row.begin(), row.end()));
    auto& dist = out[r].distribution;
    dist.resize(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (dist[j] = std::exp(static_cast<double>(row[j]) - top));
    for (auto& p : dist) p /= total;
    out[r].label = argmax(row);
  }
  return out;
}

#define ADASLSTM_INSTANTIATE_CLASSIFY(T)                                                                     \
  template struct ClassifierParams<T>;                                                                      \
  template Tensor<T> pool_head(Tape<T>&, const SlstmState<T>&, const SentenceLayout&);                      \
  template Tensor<T> pool_head(Tape<T>&, const Tensor<T>&, std::span<const std::uint8_t>, const Tensor<T>&); \
  template Tensor<T> class_logits(Tape<T>&, const Tensor<T>&, const ClassifierParams<T>&);                  \
  template std::size_t argmax(std::span<const T>);                                                          \
  template std::vector<Prediction> predict(const Tensor<T>&);

ADASLSTM_INSTANTIATE_CLASSIFY(float)
ADASLSTM_INSTANTIATE_CLASSIFY(double)

}  // namespace adaslstm
