#include "adaslstm/batch.hpp"

#include <algorithm>

#include "adaslstm/errors.hpp"

namespace adaslstm {

std::size_t TokenBatch::max_length() const {
  std::size_t m = 0;
  for (std::size_t b = 0; b < sentences(); ++b) m = std::max(m, length(b));
  return m;
}

void append_sentence(TokenBatch& batch, const std::vector<std::string>& tokens, const Vocab& vocab) {
  if (tokens.empty()) throw ArgumentError("cannot batch an empty sentence");
  for (const auto& tok : tokens) {
    batch.word_ids.push_back(static_cast<std::ptrdiff_t>(vocab.id(tok)));
    batch.char_ids.push_back(CharSet::encode(tok));
    batch.tokens.push_back(tok);
  }
  batch.offsets.push_back(batch.word_ids.size());
}

TokenBatch encode_batch(const std::vector<std::vector<std::string>>& sentences, const Vocab& vocab) {
  TokenBatch batch;
  for (const auto& s : sentences) append_sentence(batch, s, vocab);
  return batch;
}

std::size_t SentenceLayout::max_length() const {
  std::size_t m = 0;
  for (std::size_t b = 0; b < sentences(); ++b) m = std::max(m, length(b));
  return m;
}

SentenceLayout make_layout(const std::vector<std::size_t>& offsets) {
  if (offsets.empty() || offsets.front() != 0) throw ArgumentError("layout offsets must start at 0");
  SentenceLayout layout;
  layout.offsets = offsets;
  const std::size_t n = offsets.back();
  layout.sentence_of_word.resize(n);
  layout.position.resize(n);
  layout.left.resize(n);
  layout.right.resize(n);
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    if (offsets[b + 1] <= offsets[b]) throw ArgumentError("layout contains an empty sentence");
    for (std::size_t w = offsets[b]; w < offsets[b + 1]; ++w) {
      layout.sentence_of_word[w] = b;
      layout.position[w] = w - offsets[b];
      layout.left[w] = w == offsets[b] ? -1 : static_cast<std::ptrdiff_t>(w - 1);
      layout.right[w] = w + 1 == offsets[b + 1] ? -1 : static_cast<std::ptrdiff_t>(w + 1);
    }
  }
  return layout;
}

}  // namespace adaslstm
