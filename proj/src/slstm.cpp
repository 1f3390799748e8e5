#include "adaslstm/slstm.hpp"

#include "adaslstm/errors.hpp"

namespace adaslstm {

namespace {

std::vector<std::ptrdiff_t> signed_index(std::span<const std::size_t> idx) {
  return {idx.begin(), idx.end()};
}

}  // namespace

template <typename T>
SlstmParams<T> SlstmParams<T>::create(ParameterStore<T>& store, std::size_t input_dim, std::size_t hidden, Rng& rng) {
  SlstmParams p;
  p.w = store.create("slstm.w", {3 * hidden, kWordGates * hidden}, Init::Xavier, rng);
  p.u = store.create("slstm.u", {input_dim, kWordGates * hidden}, Init::Xavier, rng);
  p.v = store.create("slstm.v", {hidden, kWordGates * hidden}, Init::Xavier, rng);
  p.b = store.create("slstm.b", {kWordGates * hidden}, Init::Zeros, rng);
  p.global_w = store.create("slstm.global_w", {hidden, 3 * hidden}, Init::Xavier, rng);
  p.global_u_mean = store.create("slstm.global_u_mean", {hidden, 2 * hidden}, Init::Xavier, rng);
  p.global_u_word = store.create("slstm.global_u_word", {hidden, hidden}, Init::Xavier, rng);
  p.global_b = store.create("slstm.global_b", {3 * hidden}, Init::Zeros, rng);
  return p;
}

template <typename T>
SlstmState<T> initial_state(const SentenceLayout& layout, std::size_t hidden, const Tensor<T>& h0) {
  SlstmState<T> s;
  if (h0.defined()) {
    if (h0.rank() != 2 || h0.rows() != layout.words() || h0.cols() != hidden) {
      throw DimensionError("initial_state: h0 " + shape_string(h0.shape()) + " for " +
                           std::to_string(layout.words()) + " words of width " + std::to_string(hidden));
    }
    s.h = h0;
  } else {
    s.h = Tensor<T>::zeros({layout.words(), hidden});
  }
  s.c = Tensor<T>::zeros({layout.words(), hidden});
  s.g = Tensor<T>::zeros({layout.sentences(), hidden});
  s.cg = Tensor<T>::zeros({layout.sentences(), hidden});
  return s;
}

template <typename T>
Tensor<T> padded_sentence(const Tensor<T>& packed, const SentenceLayout& layout, std::size_t b) {
  if (b >= layout.sentences()) throw ArgumentError("padded_sentence: no sentence " + std::to_string(b));
  const std::size_t n = layout.length(b), w = packed.cols();
  std::vector<T> values((n + 2) * w, T(0));
  const auto& src = packed.values();
  std::copy(src.begin() + layout.offsets[b] * w, src.begin() + layout.offsets[b + 1] * w, values.begin() + w);
  return Tensor<T>({n + 2, w}, std::move(values));
}

template <typename T>
Tensor<T> project_inputs(Tape<T>& tape, const Tensor<T>& x, const SlstmParams<T>& params) {
  return linear(tape, x, params.u, params.b);
}

template <typename T>
WordUpdate<T> word_transition(Tape<T>& tape, const Tensor<T>& x_proj, const SlstmState<T>& prev,
                              const SentenceLayout& layout, const SlstmParams<T>& params,
                              std::span<const std::size_t> rows) {
  const std::size_t h = params.hidden();
  if (prev.h.shape() != prev.c.shape() || prev.h.rows() != layout.words() || prev.h.cols() != h ||
      x_proj.rows() != layout.words() || x_proj.cols() != kWordGates * h) {
    throw DimensionError("word_transition: state " + shape_string(prev.h.shape()) + ", cell " +
                         shape_string(prev.c.shape()) + ", projected input " + shape_string(x_proj.shape()) +
                         " for hidden " + std::to_string(h));
  }
  std::vector<std::ptrdiff_t> left, right, sentence;
  Tensor<T> h_self, c_self, x_rows;
  if (rows.empty()) {
    left = layout.left;
    right = layout.right;
    sentence = signed_index(layout.sentence_of_word);
    h_self = prev.h;
    c_self = prev.c;
    x_rows = x_proj;
  } else {
    std::vector<std::ptrdiff_t> self(rows.size());
    left.resize(rows.size());
    right.resize(rows.size());
    sentence.resize(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      self[j] = static_cast<std::ptrdiff_t>(rows[j]);
      left[j] = layout.left[rows[j]];
      right[j] = layout.right[rows[j]];
      sentence[j] = static_cast<std::ptrdiff_t>(layout.sentence_of_word[rows[j]]);
    }
    h_self = gather_rows(tape, prev.h, std::span<const std::ptrdiff_t>(self));
    c_self = gather_rows(tape, prev.c, std::span<const std::ptrdiff_t>(self));
    x_rows = gather_rows(tape, x_proj, std::span<const std::ptrdiff_t>(self));
  }
  const std::span<const std::ptrdiff_t> left_idx(left), right_idx(right), sentence_idx(sentence);

  auto xi = concat<T>(tape, {gather_rows(tape, prev.h, left_idx), h_self, gather_rows(tape, prev.h, right_idx)}, 1);
  auto from_global = gather_rows(tape, matmul(tape, prev.g, params.v), sentence_idx);
  auto pre = add(tape, add(tape, matmul(tape, xi, params.w), x_rows), from_global);
  auto block = [&](WordGate gate) { return slice_cols(tape, pre, static_cast<std::size_t>(gate) * h, h); };

  auto gates = group_softmax<T>(tape, {sigmoid(tape, block(WordGate::Input)), sigmoid(tape, block(WordGate::Left)),
                                       sigmoid(tape, block(WordGate::Right)), sigmoid(tape, block(WordGate::Forget)),
                                       sigmoid(tape, block(WordGate::Sentence))});
  auto o = sigmoid(tape, block(WordGate::Output));
  auto u = tanh(tape, block(WordGate::Candidate));

  auto c = add(tape, mul(tape, gates[1], gather_rows(tape, prev.c, left_idx)), mul(tape, gates[3], c_self));
  c = add(tape, c, mul(tape, gates[2], gather_rows(tape, prev.c, right_idx)));
  c = add(tape, c, mul(tape, gates[4], gather_rows(tape, prev.cg, sentence_idx)));
  c = add(tape, c, mul(tape, gates[0], u));
  return {mul(tape, o, tanh(tape, c)), c, std::move(gates)};
}

template <typename T>
GlobalUpdate<T> global_transition(Tape<T>& tape, const SlstmState<T>& prev, const SentenceLayout& layout,
                                  const SlstmParams<T>& params) {
  const std::size_t h = params.hidden(), n = layout.words(), sentences = layout.sentences();
  if (sentences == 0 || n == 0) throw ArgumentError("global_transition: no words");
  if (prev.h.rows() != n || prev.g.rows() != sentences || prev.g.cols() != h || prev.cg.shape() != prev.g.shape()) {
    throw DimensionError("global_transition: word state " + shape_string(prev.h.shape()) + ", global state " +
                         shape_string(prev.g.shape()) + " for " + std::to_string(sentences) + " sentences");
  }
  const auto sentence = signed_index(layout.sentence_of_word);
  auto mean_h = segment_mean(tape, prev.h, std::span<const std::size_t>(layout.offsets));
  auto from_g = add_bias(tape, matmul(tape, prev.g, params.global_w), params.global_b);
  auto from_mean = matmul(tape, mean_h, params.global_u_mean);

  auto fg_hat = sigmoid(tape, add(tape, slice_cols(tape, from_g, 0, h), slice_cols(tape, from_mean, 0, h)));
  auto o = sigmoid(tape, add(tape, slice_cols(tape, from_g, 2 * h, h), slice_cols(tape, from_mean, h, h)));
  auto fw_hat = sigmoid(tape, add(tape, gather_rows(tape, slice_cols(tape, from_g, h, h), std::span(sentence)),
                                  matmul(tape, prev.h, params.global_u_word)));

  std::vector<std::size_t> segment(layout.sentence_of_word);
  for (std::size_t b = 0; b < sentences; ++b) segment.push_back(b);
  auto normalized = segment_softmax(tape, concat<T>(tape, {fw_hat, fg_hat}, 0), std::span<const std::size_t>(segment),
                                    sentences);
  auto fw = slice_rows(tape, normalized, 0, n);
  auto fg = slice_rows(tape, normalized, n, sentences);

  auto cg = add(tape, mul(tape, fg, prev.cg),
                segment_sum(tape, mul(tape, fw, prev.c), std::span<const std::size_t>(layout.sentence_of_word),
                            sentences));
  return {mul(tape, o, tanh(tape, cg)), cg, fw, fg};
}

template <typename T>
SlstmState<T> slstm_layer(Tape<T>& tape, const Tensor<T>& x_proj, const SlstmState<T>& prev,
                          const SentenceLayout& layout, const SlstmParams<T>& params, TransitionCounter* counter) {
  auto words = word_transition(tape, x_proj, prev, layout, params);
  auto global = global_transition(tape, prev, layout, params);
  if (counter) {
    counter->word += layout.words();
    counter->global += layout.sentences();
  }
  return {words.h, words.c, global.g, global.cg, prev.layer + 1};
}

template <typename T>
SlstmState<T> full_stack(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout, std::size_t layers,
                         const SlstmParams<T>& params, const SlstmState<T>& init, TransitionCounter* counter,
                         std::vector<SlstmState<T>>* trace) {
  if (layers == 0) throw ArgumentError("full_stack: at least one layer is required");
  auto x_proj = project_inputs(tape, x, params);
  auto state = init;
  if (trace) trace->push_back(state);
  for (std::size_t l = 0; l < layers; ++l) {
    state = slstm_layer(tape, x_proj, state, layout, params, counter);
    if (trace) trace->push_back(state);
  }
  return state;
}

#define ADASLSTM_INSTANTIATE_SLSTM(T)                                                                          \
  template struct SlstmParams<T>;                                                                             \
  template SlstmState<T> initial_state(const SentenceLayout&, std::size_t, const Tensor<T>&);                 \
  template Tensor<T> padded_sentence(const Tensor<T>&, const SentenceLayout&, std::size_t);                   \
  template Tensor<T> project_inputs(Tape<T>&, const Tensor<T>&, const SlstmParams<T>&);                       \
  template WordUpdate<T> word_transition(Tape<T>&, const Tensor<T>&, const SlstmState<T>&, const SentenceLayout&, \
                                         const SlstmParams<T>&, std::span<const std::size_t>);               \
  template GlobalUpdate<T> global_transition(Tape<T>&, const SlstmState<T>&, const SentenceLayout&,           \
                                             const SlstmParams<T>&);                                          \
  template SlstmState<T> slstm_layer(Tape<T>&, const Tensor<T>&, const SlstmState<T>&, const SentenceLayout&, \
                                     const SlstmParams<T>&, TransitionCounter*);                              \
  template SlstmState<T> full_stack(Tape<T>&, const Tensor<T>&, const SentenceLayout&, std::size_t,           \
                                    const SlstmParams<T>&, const SlstmState<T>&, TransitionCounter*,          \
                                    std::vector<SlstmState<T>>*);

ADASLSTM_INSTANTIATE_SLSTM(float)
ADASLSTM_INSTANTIATE_SLSTM(double)

}  // namespace adaslstm
