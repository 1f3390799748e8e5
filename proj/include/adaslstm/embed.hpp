#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "adaslstm/batch.hpp"
#include "adaslstm/ops.hpp"
#include "adaslstm/params.hpp"
#include "adaslstm/vocab.hpp"

namespace adaslstm {

/// Width of the character-level word embedding and of the depth embedding.
inline constexpr std::size_t kCharFeatures = 50;
inline constexpr std::size_t kDepthFeatures = 50;
inline constexpr std::size_t kCharWindow = 3;

template <typename T>
struct EmbeddingTable {
  Tensor<T> table;  // [rows, dim]
  bool trainable = true;
};

/// Reads a text vector file (token followed by `dim` floats per line) into a
/// table aligned with `vocab`. Rows for tokens absent from the file are drawn
/// from U(-0.05, 0.05). The returned table is frozen.
template <typename T>
EmbeddingTable<T> load_pretrained(const std::filesystem::path& path, const Vocab& vocab, std::size_t dim, Rng& rng);

/// sin(d / 10000^(2j/dim)) at even coordinates 2j, cos(...) at odd 2j+1.
std::vector<double> sinusoidal_embedding(double position, std::size_t dim);

/// Sinusoidal depth embedding for depth d in [0, max_depth].
template <typename T>
Tensor<T> sinusoidal_depth(std::size_t depth, std::size_t max_depth, std::size_t dim = kDepthFeatures);

/// One-layer character CNN: width-3 filters over character embeddings, ReLU,
/// max over positions. Every word is framed by one PAD character on each side
/// so a window is centred on each real character; PAD embeds as zero.
template <typename T>
struct CharCnn {
  Tensor<T> char_table;  // [CharSet::kSize, char_dim]
  Tensor<T> filters;     // [3 * char_dim, 50]
  Tensor<T> bias;        // [50]

  static CharCnn create(ParameterStore<T>& store, std::size_t char_dim, Rng& rng);
  std::size_t char_dim() const { return char_table.cols(); }

  /// [words, 50] for a batch of character id sequences. Trailing PAD ids are
  /// ignored; a word with no characters left is an ArgumentError.
  Tensor<T> forward(Tape<T>& tape, const std::vector<std::vector<int>>& words) const;
  /// [50] for a single word.
  Tensor<T> forward(Tape<T>& tape, std::span<const int> word) const;
};

template <typename T>
Tensor<T> char_cnn(Tape<T>& tape, const std::vector<std::vector<int>>& words, const CharCnn<T>& params) {
  return params.forward(tape, words);
}

/// Token representation [word row ; char features] for every packed word.
/// Ids outside the table map to the UNK row.
template <typename T>
Tensor<T> assemble_tokens(Tape<T>& tape, const TokenBatch& batch, const EmbeddingTable<T>& words,
                          const CharCnn<T>& chars);

/// Trainable-plus-sinusoidal depth embedding. The trainable part is the
/// transpose of the depth classifier's output projection [50, L], so row d-1 of
/// the embedding is column d-1 of that projection.
template <typename T>
struct DepthEmbedding {
  Tensor<T> projection;  // shared storage with the classifier's [50, L] matrix
  std::size_t max_depth() const { return projection.cols(); }
  /// [words, 50] embedding for 1-based depths.
  Tensor<T> forward(Tape<T>& tape, std::span<const std::size_t> depths) const;
};

/// Appends the depth embedding of each word's selected depth: [words, in + 50].
template <typename T>
Tensor<T> refine_tokens(Tape<T>& tape, const Tensor<T>& tokens, std::span<const std::size_t> depths,
                        const DepthEmbedding<T>& depth_embedding);

}  // namespace adaslstm
