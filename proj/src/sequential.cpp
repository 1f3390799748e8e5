#include "adaslstm/sequential.hpp"

#include <numeric>

#include "adaslstm/embed.hpp"
#include "adaslstm/errors.hpp"

namespace adaslstm {

template <typename T>
LstmParams<T> LstmParams<T>::create(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                                    std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.input_weight = store.create(prefix + ".input_weight", {in, 4 * hidden}, Init::Xavier, rng);
  p.hidden_weight = store.create(prefix + ".hidden_weight", {hidden, 4 * hidden}, Init::Xavier, rng);
  p.bias = store.create(prefix + ".bias", {4 * hidden}, Init::Zeros, rng);
  return p;
}

namespace {

// gates: x·W_x + b already applied; adds h_prev·W_h and runs the recurrence
template <typename T>
LstmStep<T> lstm_gates(Tape<T>& tape, const Tensor<T>& projected_input, const Tensor<T>& h_prev,
                       const Tensor<T>& c_prev, const Tensor<T>& hidden_weight) {
  const std::size_t h = hidden_weight.rows();
  auto pre = add(tape, projected_input, matmul(tape, h_prev, hidden_weight));
  auto i = sigmoid(tape, slice_cols(tape, pre, 0, h));
  auto f = sigmoid(tape, slice_cols(tape, pre, h, h));
  auto o = sigmoid(tape, slice_cols(tape, pre, 2 * h, h));
  auto u = tanh(tape, slice_cols(tape, pre, 3 * h, h));
  auto c = add(tape, mul(tape, f, c_prev), mul(tape, i, u));
  return {mul(tape, o, tanh(tape, c)), c};
}

template <typename T>
Tensor<T> run_direction(Tape<T>& tape, const Tensor<T>& projected, const SentenceLayout& layout,
                        const LstmParams<T>& params, bool reverse) {
  const std::size_t sentences = layout.sentences(), h = params.hidden();
  const std::size_t steps = layout.max_length();
  auto h_state = Tensor<T>::zeros({sentences, h});
  auto c_state = Tensor<T>::zeros({sentences, h});
  std::vector<Tensor<T>> outputs;
  std::vector<std::ptrdiff_t> output_row(layout.words());
  std::size_t emitted = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> active;
    std::vector<std::ptrdiff_t> active_rows, words;
    for (std::size_t b = 0; b < sentences; ++b) {
      const std::size_t n = layout.length(b);
      if (t >= n) continue;
      active.push_back(b);
      active_rows.push_back(static_cast<std::ptrdiff_t>(b));
      const std::size_t pos = reverse ? n - 1 - t : t;
      words.push_back(static_cast<std::ptrdiff_t>(layout.offsets[b] + pos));
    }
    const bool all = active.size() == sentences;
    auto h_prev = all ? h_state : gather_rows(tape, h_state, std::span<const std::ptrdiff_t>(active_rows));
    auto c_prev = all ? c_state : gather_rows(tape, c_state, std::span<const std::ptrdiff_t>(active_rows));
    auto x_t = gather_rows(tape, projected, std::span<const std::ptrdiff_t>(words));
    auto step = lstm_gates(tape, x_t, h_prev, c_prev, params.hidden_weight);
    h_state = all ? step.hidden : merge_rows(tape, h_state, step.hidden, std::span<const std::size_t>(active));
    c_state = all ? step.cell : merge_rows(tape, c_state, step.cell, std::span<const std::size_t>(active));
    outputs.push_back(step.hidden);
    for (auto w : words) output_row[w] = static_cast<std::ptrdiff_t>(emitted++);
  }
  auto stacked = concat(tape, outputs, 0);
  return gather_rows(tape, stacked, std::span<const std::ptrdiff_t>(output_row));
}

}  // namespace

template <typename T>
LstmStep<T> lstm_cell(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                      const LstmParams<T>& params) {
  if (h_prev.shape() != c_prev.shape() || h_prev.cols() != params.hidden()) {
    throw DimensionError("lstm_cell: state shapes " + shape_string(h_prev.shape()) + " / " +
                         shape_string(c_prev.shape()) + " for hidden size " + std::to_string(params.hidden()));
  }
  return lstm_gates(tape, linear(tape, x, params.input_weight, params.bias), h_prev, c_prev, params.hidden_weight);
}

template <typename T>
Tensor<T> bilstm(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout, const LstmParams<T>& forward,
                 const LstmParams<T>& backward) {
  if (x.rank() != 2 || x.rows() != layout.words()) {
    throw DimensionError("bilstm: input " + shape_string(x.shape()) + " for " + std::to_string(layout.words()) +
                         " words");
  }
  auto fwd = run_direction(tape, linear(tape, x, forward.input_weight, forward.bias), layout, forward, false);
  auto bwd = run_direction(tape, linear(tape, x, backward.input_weight, backward.bias), layout, backward, true);
  return concat<T>(tape, {fwd, bwd}, 1);
}

template <typename T>
Tensor<T> to_padded(Tape<T>& tape, const Tensor<T>& packed, const SentenceLayout& layout) {
  const std::size_t width = layout.max_length();
  std::vector<std::ptrdiff_t> rows(layout.sentences() * width, -1);
  for (std::size_t w = 0; w < layout.words(); ++w) {
    rows[layout.sentence_of_word[w] * width + layout.position[w]] = static_cast<std::ptrdiff_t>(w);
  }
  return gather_rows(tape, packed, std::span<const std::ptrdiff_t>(rows));
}

std::string to_string(SequentialVariant v) {
  switch (v) {
    case SequentialVariant::BiLstm: return "bilstm";
    case SequentialVariant::SinusoidalPosition: return "sinusoidal";
    case SequentialVariant::LearnedPosition: return "learned";
    case SequentialVariant::None: return "none";
  }
  return "bilstm";
}

SequentialVariant parse_sequential_variant(const std::string& name) {
  if (name == "bilstm") return SequentialVariant::BiLstm;
  if (name == "sinusoidal") return SequentialVariant::SinusoidalPosition;
  if (name == "learned") return SequentialVariant::LearnedPosition;
  if (name == "none") return SequentialVariant::None;
  throw ArgumentError("unknown sequential variant '" + name + "' (bilstm, sinusoidal, learned, none)");
}

template <typename T>
Tensor<T> position_embedding(Tape<T>& tape, std::span<const std::size_t> positions, SequentialVariant variant,
                             std::size_t dim, const Tensor<T>& table) {
  if (variant == SequentialVariant::LearnedPosition) {
    if (!table.defined() || table.cols() != dim) throw ArgumentError("position_embedding: missing learned table");
    std::vector<std::ptrdiff_t> rows(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (positions[i] >= table.rows()) {
        throw ArgumentError("position " + std::to_string(positions[i]) + " beyond learned table of " +
                            std::to_string(table.rows()) + " rows");
      }
      rows[i] = static_cast<std::ptrdiff_t>(positions[i]);
    }
    return gather_rows(tape, table, std::span<const std::ptrdiff_t>(rows));
  }
  if (variant != SequentialVariant::SinusoidalPosition) {
    throw ArgumentError("position_embedding: variant " + to_string(variant) + " has no position embedding");
  }
  std::vector<T> values(positions.size() * dim);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto e = sinusoidal_embedding(static_cast<double>(positions[i]), dim);
    std::copy(e.begin(), e.end(), values.begin() + i * dim);
  }
  return Tensor<T>({positions.size(), dim}, std::move(values));
}

template <typename T>
SequentialModule<T> SequentialModule<T>::create(ParameterStore<T>& store, SequentialVariant variant,
                                                std::size_t token_dim, std::size_t hidden, std::size_t max_positions,
                                                Rng& rng) {
  SequentialModule m;
  m.variant = variant;
  if (variant == SequentialVariant::BiLstm) {
    if (hidden % 2 != 0) throw ArgumentError("Bi-LSTM needs an even hidden size, got " + std::to_string(hidden));
    m.forward_lstm = LstmParams<T>::create(store, "seq.forward", token_dim, hidden / 2, rng);
    m.backward_lstm = LstmParams<T>::create(store, "seq.backward", token_dim, hidden / 2, rng);
    return m;
  }
  if (variant == SequentialVariant::LearnedPosition) {
    m.position_table = store.create("seq.position_table", {max_positions, token_dim}, Init::Xavier, rng);
  }
  m.projection = store.create("seq.projection", {token_dim, hidden}, Init::Xavier, rng);
  m.projection_bias = store.create("seq.projection_bias", {hidden}, Init::Zeros, rng);
  return m;
}

template <typename T>
typename SequentialModule<T>::Output SequentialModule<T>::forward(Tape<T>& tape, const Tensor<T>& tokens,
                                                                  const SentenceLayout& layout) const {
  if (variant == SequentialVariant::BiLstm) {
    return {tokens, bilstm(tape, tokens, layout, forward_lstm, backward_lstm)};
  }
  auto with_position = tokens;
  if (variant != SequentialVariant::None) {
    with_position = add(tape, tokens,
                        position_embedding(tape, std::span<const std::size_t>(layout.position), variant,
                                           tokens.cols(), position_table));
  }
  return {with_position, linear(tape, with_position, projection, projection_bias)};
}

#define ADASLSTM_INSTANTIATE_SEQ(T)                                                                              \
  template struct LstmParams<T>;                                                                                \
  template LstmStep<T> lstm_cell(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                 const LstmParams<T>&);                                                         \
  template Tensor<T> bilstm(Tape<T>&, const Tensor<T>&, const SentenceLayout&, const LstmParams<T>&,            \
                            const LstmParams<T>&);                                                              \
  template Tensor<T> to_padded(Tape<T>&, const Tensor<T>&, const SentenceLayout&);                              \
  template Tensor<T> position_embedding(Tape<T>&, std::span<const std::size_t>, SequentialVariant, std::size_t, \
                                        const Tensor<T>&);                                                      \
  template struct SequentialModule<T>;

ADASLSTM_INSTANTIATE_SEQ(float)
ADASLSTM_INSTANTIATE_SEQ(double)

}  // namespace adaslstm
