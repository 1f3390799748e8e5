#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adaslstm/batch.hpp"
#include "adaslstm/ops.hpp"
#include "adaslstm/params.hpp"

namespace adaslstm {

/// Word gates in column-block order of the fused word-level matrices.
enum class WordGate : std::size_t { Left, Right, Forget, Sentence, Input, Output, Candidate };
inline constexpr std::size_t kWordGates = 7;

/// One parameter set shared by every layer.
///
/// Word level: pre = [h_left; h_self; h_right]·W + x·U + g·V + b, with the seven
/// gate blocks laid out as WordGate. Global level has its own matrices:
/// g·global_w gives the (f_g | f_word | o) blocks, h_mean·global_u_mean the
/// (f_g | o) blocks, h_i·global_u_word the per-word forget block.
template <typename T>
struct SlstmParams {
  Tensor<T> w;              // [3h, 7h]
  Tensor<T> u;              // [x, 7h]
  Tensor<T> v;              // [h, 7h]
  Tensor<T> b;              // [7h]
  Tensor<T> global_w;       // [h, 3h]
  Tensor<T> global_u_mean;  // [h, 2h]
  Tensor<T> global_u_word;  // [h, h]
  Tensor<T> global_b;       // [3h]

  static SlstmParams create(ParameterStore<T>& store, std::size_t input_dim, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return v.rows(); }
  std::size_t input_dim() const { return u.rows(); }
};

/// Packed layer state: one row per real word in `h`/`c`, one row per sentence
/// in `g`/`cg`. Padding words are implicit zero rows.
template <typename T>
struct SlstmState {
  Tensor<T> h, c;
  Tensor<T> g, cg;
  std::size_t layer = 0;
};

/// Zero state, or h taken from `h0` when given.
template <typename T>
SlstmState<T> initial_state(const SentenceLayout& layout, std::size_t hidden, const Tensor<T>& h0 = {});

/// The [n + 2, hidden] word-state matrix of sentence b with zero padding rows 0 and n + 1.
template <typename T>
Tensor<T> padded_sentence(const Tensor<T>& packed, const SentenceLayout& layout, std::size_t b);

template <typename T>
struct WordUpdate {
  Tensor<T> h, c;
  /// Normalized input, left, right, forget, sentence gates.
  std::vector<Tensor<T>> gates;
};

/// x·U + b for every word; constant across layers, so computed once per forward.
template <typename T>
Tensor<T> project_inputs(Tape<T>& tape, const Tensor<T>& x, const SlstmParams<T>& params);

/// Word-level transition for the listed rows (all rows when `rows` is empty),
/// reading only the previous layer's state. Result row j belongs to rows[j].
template <typename T>
WordUpdate<T> word_transition(Tape<T>& tape, const Tensor<T>& x_proj, const SlstmState<T>& prev,
                              const SentenceLayout& layout, const SlstmParams<T>& params,
                              std::span<const std::size_t> rows = {});

template <typename T>
struct GlobalUpdate {
  Tensor<T> g, cg;
  Tensor<T> word_gates;    // normalized f_i, [words, h]
  Tensor<T> global_gates;  // normalized f_g, [sentences, h]
};

/// Global-node transition for every sentence of `layout`. The forget gates of
/// the global node and of each real word are normalized jointly per sentence.
template <typename T>
GlobalUpdate<T> global_transition(Tape<T>& tape, const SlstmState<T>& prev, const SentenceLayout& layout,
                                  const SlstmParams<T>& params);

/// Executed-transition tally: word rows and sentence (global) rows.
struct TransitionCounter {
  std::size_t word = 0;
  std::size_t global = 0;
};

/// One synchronized layer over all words and sentences.
template <typename T>
SlstmState<T> slstm_layer(Tape<T>& tape, const Tensor<T>& x_proj, const SlstmState<T>& prev,
                          const SentenceLayout& layout, const SlstmParams<T>& params,
                          TransitionCounter* counter = nullptr);

/// L synchronized layers over refined tokens `x` from `init`.
template <typename T>
SlstmState<T> full_stack(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout, std::size_t layers,
                         const SlstmParams<T>& params, const SlstmState<T>& init,
                         TransitionCounter* counter = nullptr, std::vector<SlstmState<T>>* trace = nullptr);

}  // namespace adaslstm
