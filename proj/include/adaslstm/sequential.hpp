#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "adaslstm/batch.hpp"
#include "adaslstm/ops.hpp"
#include "adaslstm/params.hpp"

namespace adaslstm {

/// Gate columns of the fused LSTM weights, in order: input, forget, output, candidate.
template <typename T>
struct LstmParams {
  Tensor<T> input_weight;   // [in, 4 * hidden]
  Tensor<T> hidden_weight;  // [hidden, 4 * hidden]
  Tensor<T> bias;           // [4 * hidden]

  static LstmParams create(ParameterStore<T>& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                           Rng& rng);
  std::size_t hidden() const { return hidden_weight.rows(); }
};

template <typename T>
struct LstmStep {
  Tensor<T> hidden;
  Tensor<T> cell;
};

/// One LSTM step for a block of rows: c = f*c_prev + i*u, h = o*tanh(c).
template <typename T>
LstmStep<T> lstm_cell(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                      const LstmParams<T>& params);

/// Bidirectional single-layer LSTM over packed sentences. Each direction only
/// runs over the true length of its sentence. Row w of the result is
/// [forward_w ; backward_w].
template <typename T>
Tensor<T> bilstm(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout, const LstmParams<T>& forward,
                 const LstmParams<T>& backward);

/// Scatters packed rows into a [sentences * max_length, cols] matrix with zero rows at padding.
template <typename T>
Tensor<T> to_padded(Tape<T>& tape, const Tensor<T>& packed, const SentenceLayout& layout);

enum class SequentialVariant { BiLstm, SinusoidalPosition, LearnedPosition, None };

std::string to_string(SequentialVariant v);
SequentialVariant parse_sequential_variant(const std::string& name);

/// Position embedding rows for the given positions. The learned variant reads
/// rows of `table`; a position past the table is an ArgumentError.
template <typename T>
Tensor<T> position_embedding(Tape<T>& tape, std::span<const std::size_t> positions, SequentialVariant variant,
                             std::size_t dim, const Tensor<T>& table = {});

/// The order-injecting module below the S-LSTM.
///
/// `tokens` is what the S-LSTM refines and consumes; `features` (hidden wide)
/// feeds the depth classifier. With the Bi-LSTM, features are its outputs;
/// with a position-embedding variant or none, tokens get the position vector
/// added and features are a trainable projection of those tokens.
template <typename T>
struct SequentialModule {
  SequentialVariant variant = SequentialVariant::BiLstm;
  LstmParams<T> forward_lstm, backward_lstm;
  Tensor<T> position_table;  // learned variant only
  Tensor<T> projection, projection_bias;

  static SequentialModule create(ParameterStore<T>& store, SequentialVariant variant, std::size_t token_dim,
                                 std::size_t hidden, std::size_t max_positions, Rng& rng);

  struct Output {
    Tensor<T> tokens;
    Tensor<T> features;
  };
  Output forward(Tape<T>& tape, const Tensor<T>& tokens, const SentenceLayout& layout) const;
};

}  // namespace adaslstm
