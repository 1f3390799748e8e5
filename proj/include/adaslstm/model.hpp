#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaslstm/batch.hpp"
#include "adaslstm/classify.hpp"
#include "adaslstm/config.hpp"
#include "adaslstm/depth.hpp"
#include "adaslstm/embed.hpp"
#include "adaslstm/sequential.hpp"
#include "adaslstm/slstm.hpp"
#include "adaslstm/vocab.hpp"

namespace adaslstm {

template <typename T>
struct ForwardOptions {
  bool training = false;
  /// When nonzero every word executes exactly this many layers.
  std::size_t forced_depth = 0;
  /// Per-word depths overriding the classifier (takes precedence over forced_depth).
  const std::vector<std::size_t>* forced_depths = nullptr;
  TransitionCounter* counter = nullptr;
  std::vector<SlstmState<T>>* trace = nullptr;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;  // [sentences, labels]
  DepthAssignment<T> assignment;
  SlstmState<T> state;
  SentenceLayout layout;
};

/// Character CNN + word embeddings, sequential module, depth classifier,
/// S-LSTM stack and pooled softmax head.
template <typename T>
class Model {
 public:
  /// `pretrained`, when given, replaces the random word table; it is frozen
  /// when config.freeze_pretrained is set.
  static Model create(const Config& config, Vocab vocab, std::vector<std::string> labels, Rng& rng,
                      std::optional<EmbeddingTable<T>> pretrained = std::nullopt);

  ForwardResult<T> forward(Tape<T>& tape, const TokenBatch& batch, Rng& rng,
                           const ForwardOptions<T>& options = {}) const;
  Tensor<T> loss(Tape<T>& tape, const ForwardResult<T>& result, std::span<const std::size_t> gold) const;

  TokenBatch encode(const std::vector<std::vector<std::string>>& sentences) const;

  const Config& config() const noexcept { return config_; }
  const Vocab& vocab() const noexcept { return vocab_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  ParameterStore<T>& parameters() noexcept { return store_; }
  const ParameterStore<T>& parameters() const noexcept { return store_; }

  const SlstmParams<T>& slstm() const noexcept { return slstm_; }
  const DepthClassifierParams<T>& depth() const noexcept { return depth_; }
  const EmbeddingTable<T>& word_table() const noexcept { return words_; }
  SequentialVariant sequential_variant() const noexcept { return sequential_.variant; }
  DepthStrategy strategy() const noexcept { return strategy_; }

 private:
  Config config_;
  Vocab vocab_;
  std::vector<std::string> labels_;
  ParameterStore<T> store_;
  EmbeddingTable<T> words_;
  CharCnn<T> chars_;
  SequentialModule<T> sequential_;
  DepthClassifierParams<T> depth_;
  SlstmParams<T> slstm_;
  ClassifierParams<T> head_;
  DepthStrategy strategy_ = DepthStrategy::Gumbel;
};

}  // namespace adaslstm
