#include "adaslstm/model.hpp"

#include "adaslstm/errors.hpp"

namespace adaslstm {

template <typename T>
Model<T> Model<T>::create(const Config& config, Vocab vocab, std::vector<std::string> labels, Rng& rng,
                          std::optional<EmbeddingTable<T>> pretrained) {
  validate(config);
  Model m;
  m.config_ = config;
  m.vocab_ = std::move(vocab);
  m.labels_ = std::move(labels);
  m.strategy_ = parse_depth_strategy(config.strategy);

  if (pretrained) {
    const auto& table = pretrained->table;
    if (table.rows() != m.vocab_.size() || table.cols() != config.word_dim) {
      throw DimensionError("pretrained table " + shape_string(table.shape()) + " does not match vocab " +
                           std::to_string(m.vocab_.size()) + " x " + std::to_string(config.word_dim));
    }
    const bool trainable = !config.freeze_pretrained;
    m.words_ = {m.store_.adopt("word.embedding", table, trainable), trainable};
  } else {
    auto table = m.store_.create("word.embedding", {m.vocab_.size(), config.word_dim}, Init::Zeros, rng);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    auto values = table.mutable_values();
    for (std::size_t i = config.word_dim * (Vocab::kPad + 1); i < values.size(); ++i) {
      values[i] = static_cast<T>(dist(rng));
    }
    m.words_ = {table, true};
  }

  const std::size_t token_dim = config.word_dim + kCharFeatures;
  m.chars_ = CharCnn<T>::create(m.store_, config.char_dim, rng);
  m.sequential_ = SequentialModule<T>::create(m.store_, parse_sequential_variant(config.sequential), token_dim,
                                              config.hidden, config.max_positions, rng);
  m.depth_ = DepthClassifierParams<T>::create(m.store_, config.hidden, config.max_depth, rng);
  m.slstm_ = SlstmParams<T>::create(m.store_, token_dim + kDepthFeatures, config.hidden, rng);
  m.head_ = ClassifierParams<T>::create(m.store_, config.hidden, m.labels_.size(), rng);
  return m;
}

template <typename T>
ForwardResult<T> Model<T>::forward(Tape<T>& tape, const TokenBatch& batch, Rng& rng,
                                   const ForwardOptions<T>& options) const {
  ForwardResult<T> result;
  result.layout = make_layout(batch.offsets);
  const auto& layout = result.layout;

  auto tokens = assemble_tokens(tape, batch, words_, chars_);
  tokens = dropout(tape, tokens, config_.dropout_embed, rng, options.training);
  auto seq = sequential_.forward(tape, tokens, layout);
  auto features = dropout(tape, seq.features, config_.dropout_hidden, rng, options.training);
  if (config_.detach_depth_input) features = features.detach();

  const std::size_t L = config_.max_depth;
  if (options.forced_depths || options.forced_depth > 0 || !config_.adaptive) {
    std::vector<std::size_t> depths;
    if (options.forced_depths) {
      depths = *options.forced_depths;
    } else {
      depths.assign(layout.words(), options.forced_depth > 0 ? options.forced_depth : L);
    }
    auto scores = depth_logits(tape, features, depth_);
    result.assignment = assignment_from_depths<T>(std::move(depths), layout, L);
    result.assignment.logits = scores.logits;
    result.assignment.inner = scores.inner;
  } else {
    result.assignment = compute_assignment(tape, features, layout, depth_, strategy_, config_.tau, rng);
  }

  auto init = initial_state(layout, config_.hidden, init_h0(tape, result.assignment.inner, depth_));
  auto refined = refine_tokens(tape, seq.tokens, std::span<const std::size_t>(result.assignment.depths),
                               depth_.embedding());
  if (config_.adaptive || options.forced_depths || options.forced_depth > 0) {
    result.state = adaptive_stack(tape, refined, layout, result.assignment, slstm_, init, options.counter,
                                  options.trace);
  } else {
    result.state = full_stack(tape, refined, layout, L, slstm_, init, options.counter, options.trace);
  }

  auto v = dropout(tape, pool_head(tape, result.state, layout), config_.dropout_hidden, rng, options.training);
  result.logits = class_logits(tape, v, head_);
  return result;
}

template <typename T>
Tensor<T> Model<T>::loss(Tape<T>& tape, const ForwardResult<T>& result, std::span<const std::size_t> gold) const {
  return softmax_cross_entropy(tape, result.logits, gold, config_.label_smoothing);
}

template <typename T>
TokenBatch Model<T>::encode(const std::vector<std::vector<std::string>>& sentences) const {
  return encode_batch(sentences, vocab_);
}

template class Model<float>;
template class Model<double>;

}  // namespace adaslstm
