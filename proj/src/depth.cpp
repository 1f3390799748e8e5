#include "adaslstm/depth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adaslstm/errors.hpp"

namespace adaslstm {

std::string to_string(DepthStrategy s) {
  switch (s) {
    case DepthStrategy::Hard: return "hard";
    case DepthStrategy::Soft: return "soft";
    case DepthStrategy::Gumbel: return "gumbel";
  }
  return "gumbel";
}

DepthStrategy parse_depth_strategy(const std::string& name) {
  if (name == "hard") return DepthStrategy::Hard;
  if (name == "soft") return DepthStrategy::Soft;
  if (name == "gumbel") return DepthStrategy::Gumbel;
  throw ArgumentError("unknown depth strategy '" + name + "' (hard, soft, gumbel)");
}

template <typename T>
DepthClassifierParams<T> DepthClassifierParams<T>::create(ParameterStore<T>& store, std::size_t hidden,
                                                          std::size_t max_depth, Rng& rng) {
  if (max_depth == 0) throw ArgumentError("depth classifier needs at least one depth");
  DepthClassifierParams p;
  p.w1 = store.create("depth.w1", {hidden, kDepthInner}, Init::Xavier, rng);
  p.b1 = store.create("depth.b1", {kDepthInner}, Init::Zeros, rng);
  p.w2 = store.create("depth.w2", {kDepthInner, max_depth}, Init::Zeros, rng);
  p.b2 = store.create("depth.b2", {max_depth}, Init::Zeros, rng);
  p.h0_projection = store.create("depth.h0_projection", {kDepthInner, hidden}, Init::Xavier, rng);
  return p;
}

template <typename T>
DepthLogits<T> depth_logits(Tape<T>& tape, const Tensor<T>& h, const DepthClassifierParams<T>& params) {
  auto inner = relu(tape, linear(tape, h, params.w1, params.b1));
  return {linear(tape, inner, params.w2, params.b2), inner};
}

template <typename T>
Tensor<T> depth_probs(Tape<T>& tape, const Tensor<T>& logits) {
  return softmax(tape, logits, logits.rank() == 2 ? 1 : 0);
}

template <typename T>
std::size_t select_hard(std::span<const T> p) {
  if (p.empty()) throw ArgumentError("select_hard: empty distribution");
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

template <typename T>
std::size_t select_soft(std::span<const T> p) {
  if (p.empty()) throw ArgumentError("select_soft: empty distribution");
  double expected = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) expected += static_cast<double>(j + 1) * static_cast<double>(p[j]);
  const auto d = static_cast<long long>(std::floor(expected));
  return static_cast<std::size_t>(std::clamp<long long>(d, 1, static_cast<long long>(p.size())));
}

std::vector<double> gumbel_noise(std::size_t count, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> eta(count);
  for (auto& e : eta) {
    double u = 0.0;
    while (u <= 0.0) u = uniform(rng);
    e = -std::log(-std::log(u));
  }
  return eta;
}

template <typename T>
std::vector<double> perturbed_softmax(std::span<const T> logits, std::span<const double> noise, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("gumbel temperature must be positive");
  if (logits.size() != noise.size() || logits.empty()) {
    throw DimensionError("perturbed_softmax: " + std::to_string(logits.size()) + " logits, " +
                         std::to_string(noise.size()) + " noise values");
  }
  std::vector<double> z(logits.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = (static_cast<double>(logits[j]) + noise[j]) / tau;
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += (v = std::exp(v - top));
  for (auto& v : z) v /= total;
  return z;
}

template <typename T>
std::size_t select_gumbel(std::span<const T> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ArgumentError("gumbel temperature must be positive");
  if (logits.empty()) throw ArgumentError("select_gumbel: empty logits");
  const auto eta = gumbel_noise(logits.size(), rng);
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double v = (static_cast<double>(logits[j]) + eta[j]) / tau;
    if (j == 0 || v > best_value) {
      best = j;
      best_value = v;
    }
  }
  return best + 1;
}

template <typename T>
Tensor<T> init_h0(Tape<T>& tape, const Tensor<T>& inner, const DepthClassifierParams<T>& params) {
  return matmul(tape, inner, params.h0_projection);
}

template <typename T>
double DepthAssignment<T>::mean_depth() const {
  if (depths.empty()) return 0.0;
  return static_cast<double>(std::accumulate(depths.begin(), depths.end(), std::size_t{0})) /
         static_cast<double>(depths.size());
}

template <typename T>
std::vector<std::size_t> DepthAssignment<T>::padded(const SentenceLayout& layout, std::size_t b) const {
  std::vector<std::size_t> out{0};
  out.insert(out.end(), depths.begin() + layout.offsets[b], depths.begin() + layout.offsets[b + 1]);
  out.push_back(0);
  return out;
}

template <typename T>
DepthAssignment<T> assignment_from_depths(std::vector<std::size_t> depths, const SentenceLayout& layout,
                                          std::size_t max_depth) {
  if (depths.size() != layout.words()) {
    throw DimensionError("assignment: " + std::to_string(depths.size()) + " depths for " +
                         std::to_string(layout.words()) + " words");
  }
  DepthAssignment<T> a;
  a.sentence_max.assign(layout.sentences(), 0);
  for (std::size_t w = 0; w < depths.size(); ++w) {
    if (depths[w] < 1 || depths[w] > max_depth) {
      throw ArgumentError("depth " + std::to_string(depths[w]) + " outside [1, " + std::to_string(max_depth) + "]");
    }
    auto& m = a.sentence_max[layout.sentence_of_word[w]];
    m = std::max(m, depths[w]);
  }
  a.batch_max = a.sentence_max.empty() ? 0 : *std::max_element(a.sentence_max.begin(), a.sentence_max.end());
  a.depths = std::move(depths);
  return a;
}

template <typename T>
DepthAssignment<T> compute_assignment(Tape<T>& tape, const Tensor<T>& h, const SentenceLayout& layout,
                                      const DepthClassifierParams<T>& params, DepthStrategy strategy, double tau,
                                      Rng& rng) {
  if (strategy == DepthStrategy::Gumbel && !(tau > 0.0)) throw ArgumentError("gumbel temperature must be positive");
  auto out = depth_logits(tape, h, params);
  auto probs = depth_probs(tape, out.logits);
  const std::size_t L = params.max_depth();
  std::vector<std::size_t> depths(layout.words());
  for (std::size_t w = 0; w < depths.size(); ++w) {
    const auto p = probs.values().subspan(w * L, L);
    switch (strategy) {
      case DepthStrategy::Hard: depths[w] = select_hard(p); break;
      case DepthStrategy::Soft: depths[w] = select_soft(p); break;
      case DepthStrategy::Gumbel: depths[w] = select_gumbel(out.logits.values().subspan(w * L, L), tau, rng); break;
    }
  }
  auto a = assignment_from_depths<T>(std::move(depths), layout, L);
  a.logits = out.logits;
  a.probs = probs;
  a.inner = out.inner;
  return a;
}

namespace {

// Global transition restricted to the listed sentences, merged back into the full g / cg.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> global_subset(Tape<T>& tape, const SlstmState<T>& prev, const SentenceLayout& layout,
                                              const SlstmParams<T>& params, const std::vector<std::size_t>& active) {
  std::vector<std::size_t> offsets{0};
  std::vector<std::ptrdiff_t> word_rows, sentence_rows;
  for (auto b : active) {
    for (std::size_t w = layout.offsets[b]; w < layout.offsets[b + 1]; ++w) {
      word_rows.push_back(static_cast<std::ptrdiff_t>(w));
    }
    offsets.push_back(word_rows.size());
    sentence_rows.push_back(static_cast<std::ptrdiff_t>(b));
  }
  const auto sub_layout = make_layout(offsets);
  SlstmState<T> sub{gather_rows(tape, prev.h, std::span<const std::ptrdiff_t>(word_rows)),
                    gather_rows(tape, prev.c, std::span<const std::ptrdiff_t>(word_rows)),
                    gather_rows(tape, prev.g, std::span<const std::ptrdiff_t>(sentence_rows)),
                    gather_rows(tape, prev.cg, std::span<const std::ptrdiff_t>(sentence_rows)), prev.layer};
  auto update = global_transition(tape, sub, sub_layout, params);
  const std::span<const std::size_t> idx(active);
  return {merge_rows(tape, prev.g, update.g, idx), merge_rows(tape, prev.cg, update.cg, idx)};
}

}  // namespace

template <typename T>
SlstmState<T> adaptive_stack(Tape<T>& tape, const Tensor<T>& x, const SentenceLayout& layout,
                             const DepthAssignment<T>& assignment, const SlstmParams<T>& params,
                             const SlstmState<T>& init, TransitionCounter* counter,
                             std::vector<SlstmState<T>>* trace) {
  if (assignment.depths.size() != layout.words() || assignment.sentence_max.size() != layout.sentences()) {
    throw DimensionError("adaptive_stack: assignment does not match the batch layout");
  }
  auto x_proj = project_inputs(tape, x, params);
  auto state = init;
  if (trace) trace->push_back(state);
  const std::size_t n = layout.words(), sentences = layout.sentences();
  for (std::size_t l = 1; l <= assignment.batch_max; ++l) {
    std::vector<std::size_t> active_words, active_sentences;
    std::vector<std::uint8_t> word_mask(n, 0);
    for (std::size_t w = 0; w < n; ++w) {
      if (assignment.depths[w] >= l) {
        active_words.push_back(w);
        word_mask[w] = 1;
      }
    }
    for (std::size_t b = 0; b < sentences; ++b) {
      if (assignment.sentence_max[b] >= l) active_sentences.push_back(b);
    }
    if (active_words.size() == n) {
      state = slstm_layer(tape, x_proj, state, layout, params, counter);
      if (trace) trace->push_back(state);
      continue;
    }

    SlstmState<T> next = state;
    next.layer = state.layer + 1;
    if (!active_words.empty()) {
      if (2 * active_words.size() < n) {
        auto update = word_transition(tape, x_proj, state, layout, params, std::span<const std::size_t>(active_words));
        next.h = merge_rows(tape, state.h, update.h, std::span<const std::size_t>(active_words));
        next.c = merge_rows(tape, state.c, update.c, std::span<const std::size_t>(active_words));
      } else {
        auto update = word_transition(tape, x_proj, state, layout, params);
        const std::span<const std::uint8_t> mask(word_mask);
        next.h = select_rows(tape, mask, update.h, state.h);
        next.c = select_rows(tape, mask, update.c, state.c);
      }
    }
    if (active_sentences.size() == sentences) {
      auto update = global_transition(tape, state, layout, params);
      next.g = update.g;
      next.cg = update.cg;
    } else if (!active_sentences.empty()) {
      std::tie(next.g, next.cg) = global_subset(tape, state, layout, params, active_sentences);
    }
    if (counter) {
      counter->word += active_words.size();
      counter->global += active_sentences.size();
    }
    state = std::move(next);
    if (trace) trace->push_back(state);
  }
  return state;
}

#define ADASLSTM_INSTANTIATE_DEPTH(T)                                                                          \
  template struct DepthClassifierParams<T>;                                                                   \
  template DepthLogits<T> depth_logits(Tape<T>&, const Tensor<T>&, const DepthClassifierParams<T>&);          \
  template Tensor<T> depth_probs(Tape<T>&, const Tensor<T>&);                                                 \
  template std::size_t select_hard(std::span<const T>);                                                       \
  template std::size_t select_soft(std::span<const T>);                                                       \
  template std::vector<double> perturbed_softmax(std::span<const T>, std::span<const double>, double);        \
  template std::size_t select_gumbel(std::span<const T>, double, Rng&);                                       \
  template Tensor<T> init_h0(Tape<T>&, const Tensor<T>&, const DepthClassifierParams<T>&);                    \
  template struct DepthAssignment<T>;                                                                         \
  template DepthAssignment<T> assignment_from_depths(std::vector<std::size_t>, const SentenceLayout&,         \
                                                     std::size_t);                                            \
  template DepthAssignment<T> compute_assignment(Tape<T>&, const Tensor<T>&, const SentenceLayout&,           \
                                                 const DepthClassifierParams<T>&, DepthStrategy, double, Rng&); \
  template SlstmState<T> adaptive_stack(Tape<T>&, const Tensor<T>&, const SentenceLayout&,                    \
                                        const DepthAssignment<T>&, const SlstmParams<T>&, const SlstmState<T>&, \
                                        TransitionCounter*, std::vector<SlstmState<T>>*);

ADASLSTM_INSTANTIATE_DEPTH(float)
ADASLSTM_INSTANTIATE_DEPTH(double)

}  // namespace adaslstm
