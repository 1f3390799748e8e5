#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "adaslstm/tensor.hpp"

namespace adaslstm {

using Rng = std::mt19937_64;

enum class Activation { Sigmoid, Tanh, Relu };

// Every operation below computes its result eagerly. When the tape is
// recording and at least one input requires a gradient, the result requires a
// gradient too and its backward rule is appended to the tape.

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// x·W + b, for x of shape [in] or [rows, in].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Adds a [cols] bias to every row of x.
template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);
/// Sum of all entries, as a rank-0 tensor.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> activation(Tape<T>& tape, const Tensor<T>& x, Activation kind);
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, x, Activation::Sigmoid); }
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, x, Activation::Tanh); }
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, x, Activation::Relu); }

/// Max-subtracted softmax along `axis` (0 or 1 for matrices, 0 for vectors).
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

/// Joint softmax across k same-shaped tensors: for every coordinate the k
/// values at that coordinate are normalized against each other.
template <typename T>
std::vector<Tensor<T>> group_softmax(Tape<T>& tape, const std::vector<Tensor<T>>& gates);

/// Concatenation along axis 0 (rows) or 1 (columns). Vectors concatenate on axis 0.
template <typename T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis);

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> transpose(Tape<T>& tape, const Tensor<T>& x);
/// Reinterprets the buffer with a new shape of the same size.
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

/// Row gather; index -1 yields a zero row that receives no gradient.
template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::ptrdiff_t> index);

/// Copy of `base` with row index[j] replaced by row j of `update`.
template <typename T>
Tensor<T> merge_rows(Tape<T>& tape, const Tensor<T>& base, const Tensor<T>& update,
                     std::span<const std::size_t> index);

/// Row-wise choice: row r comes from `when_true` if mask[r], else from `when_false`.
template <typename T>
Tensor<T> select_rows(Tape<T>& tape, std::span<const std::uint8_t> mask, const Tensor<T>& when_true,
                      const Tensor<T>& when_false);

/// Column-wise max over the rows of X whose mask entry is set (all rows if mask is empty).
template <typename T>
Tensor<T> max_pool(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask = {});
/// Column-wise mean over unmasked rows; divides by the unmasked count only.
template <typename T>
Tensor<T> mean_pool(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask = {});

/// Segment reductions over packed rows. offsets has one entry per segment
/// plus a final end offset; every segment must be nonempty.
template <typename T>
Tensor<T> segment_max(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> offsets);
template <typename T>
Tensor<T> segment_mean(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> offsets);
/// Sum of rows grouped by segment id into [segments, cols].
template <typename T>
Tensor<T> segment_sum(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> segment_of_row,
                      std::size_t segments);
/// Softmax down each column, separately within every segment of rows.
template <typename T>
Tensor<T> segment_softmax(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> segment_of_row,
                          std::size_t segments);

/// Inverted dropout. Identity (the same tensor) when rate is 0 or training is false.
template <typename T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, Rng& rng, bool training);

/// Rows of `table` selected by id; id -1 maps to a zero row.
template <typename T>
Tensor<T> embedding_lookup(Tape<T>& tape, const Tensor<T>& table, std::span<const std::ptrdiff_t> ids) {
  return gather_rows(tape, table, ids);
}

/// Mean over rows of -sum_k target_k log(max(p_k, 1e-12)), where target puts
/// 1 - eps on the gold label and eps / K on every label.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& probs, std::span<const std::size_t> gold, double smoothing);

/// Fused softmax + cross_entropy over logits, computed in log space.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::size_t> gold,
                                double smoothing);

/// Throws NumericalError if any value is NaN or infinite.
template <typename T>
void check_finite(const Tensor<T>& x, const char* where);

}  // namespace adaslstm
