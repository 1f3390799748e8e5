#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adaslstm/vocab.hpp"

namespace adaslstm {

/// Sentences packed back to back: word w of sentence b is row offsets[b] + w of
/// every per-word tensor. Positions past a sentence's length are implicit
/// padding; they are never materialized, so they cost nothing and read as zero.
struct TokenBatch {
  std::vector<std::size_t> offsets{0};
  std::vector<std::ptrdiff_t> word_ids;
  std::vector<std::vector<int>> char_ids;
  std::vector<std::string> tokens;
  std::vector<std::size_t> labels;

  std::size_t sentences() const noexcept { return offsets.size() - 1; }
  std::size_t words() const noexcept { return word_ids.size(); }
  std::size_t length(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
  std::size_t max_length() const;
};

/// Appends one tokenized sentence. Throws ArgumentError on an empty sentence.
void append_sentence(TokenBatch& batch, const std::vector<std::string>& tokens, const Vocab& vocab);
TokenBatch encode_batch(const std::vector<std::vector<std::string>>& sentences, const Vocab& vocab);

/// Neighbourhood structure derived from sentence lengths.
struct SentenceLayout {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sentence_of_word;
  std::vector<std::size_t> position;
  /// Row of the left / right neighbour, or -1 at a sentence boundary (the padding word).
  std::vector<std::ptrdiff_t> left;
  std::vector<std::ptrdiff_t> right;

  std::size_t sentences() const noexcept { return offsets.size() - 1; }
  std::size_t words() const noexcept { return sentence_of_word.size(); }
  std::size_t length(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
  std::size_t max_length() const;
};

SentenceLayout make_layout(const std::vector<std::size_t>& offsets);

}  // namespace adaslstm
