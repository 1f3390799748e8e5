#include "adaslstm/vocab.hpp"

#include <algorithm>
#include <map>

#include "adaslstm/errors.hpp"

namespace adaslstm {

namespace {
const std::string kPadToken = "<pad>";
const std::string kUnkToken = "<unk>";
}  // namespace

Vocab::Vocab() {
  insert(kPadToken);
  insert(kUnkToken);
}

void Vocab::insert(std::string token) {
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, std::size_t min_freq) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw ArgumentError("vocabulary token list must start with <pad>, <unk>");
  }
  Vocab v;
  v.min_freq_ = min_freq;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ArgumentError("duplicate vocabulary token: " + tokens[i]);
    v.insert(std::move(tokens[i]));
  }
  return v;
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  return id < tokens_.size() ? tokens_[id] : tokens_[kUnk];
}

bool Vocab::contains(std::string_view token) const {
  return ids_.count(std::string(token)) != 0;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq) {
  if (corpus.empty()) throw ArgumentError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is already lexicographic, so a stable sort on frequency keeps the tie order
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  v.min_freq_ = min_freq;
  for (auto& [tok, n] : ranked) {
    if (n < min_freq || v.contains(tok)) continue;
    v.insert(tok);
  }
  return v;
}

int CharSet::id(unsigned char c) {
  if (c >= 32 && c <= 126) return static_cast<int>(c) - 32 + 2;
  return kUnk;
}

std::vector<int> CharSet::encode(std::string_view word) {
  std::vector<int> ids;
  ids.reserve(word.size());
  for (unsigned char c : word) ids.push_back(id(c));
  return ids;
}

}  // namespace adaslstm
