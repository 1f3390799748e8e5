#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace adaslstm {

/// Word vocabulary. Ids are dense: PAD = 0, UNK = 1, then tokens by descending
/// frequency with ties broken lexicographically.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocab();
  /// Rebuilds from an id-ordered token list (PAD and UNK included), as stored
  /// in checkpoints.
  static Vocab from_tokens(std::vector<std::string> tokens, std::size_t min_freq);

  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t min_freq() const noexcept { return min_freq_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  friend Vocab build_vocab(const std::vector<std::vector<std::string>>&, std::size_t);
  void insert(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t min_freq_ = 1;
};

/// Tokens occurring fewer than `min_freq` times are left out (they map to UNK).
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq = 1);

/// Character ids for the char-CNN: PAD = 0, UNK = 1, printable ASCII 32..126
/// at 2..96. Case is preserved; any other byte maps to UNK.
struct CharSet {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::size_t kSize = 97;
  static int id(unsigned char c);
  static std::vector<int> encode(std::string_view word);
};

}  // namespace adaslstm
