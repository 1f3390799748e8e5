#include "adaslstm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "adaslstm/errors.hpp"

namespace adaslstm {

template <typename T>
Adam<T>::Adam(ParameterStore<T>& store, AdamOptions options) : store_(&store), options_(options) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0);
    v_.emplace_back(e.tensor.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  auto& entries = store_->entries();
  if (entries.size() != m_.size()) throw ArgumentError("adam: parameter set changed after construction");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& e = entries[p];
    if (!e.trainable || !e.tensor.has_grad()) continue;
    auto values = e.tensor.mutable_values();
    const auto grad = e.tensor.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double update = lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + options_.eps);
      values[i] = static_cast<T>(static_cast<double>(values[i]) - update);
    }
  }
}

double learning_rate_at(double base, double decay, std::size_t step, std::size_t steps_per_epoch) {
  if (steps_per_epoch == 0) throw ArgumentError("learning_rate_at: steps_per_epoch must be positive");
  return base * std::pow(decay, static_cast<double>(step) / static_cast<double>(steps_per_epoch));
}

double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (auto g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto g : grads) {
      for (double& x : g) x *= s;
    }
  }
  return norm;
}

template <typename T>
double global_grad_norm(const ParameterStore<T>& store) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (T x : e.tensor.grad()) sq += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_global_norm(ParameterStore<T>& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& e : store.entries()) {
      if (!e.trainable || !e.tensor.has_grad()) continue;
      for (T& x : e.tensor.mutable_grad()) x *= s;
    }
  }
  return norm;
}

template <typename T>
TokenBatch make_batch(const Model<T>& model, const std::vector<Example>& examples,
                      std::span<const std::size_t> indices) {
  TokenBatch batch;
  for (auto i : indices) {
    append_sentence(batch, examples.at(i).tokens, model.vocab());
    batch.labels.push_back(examples[i].label);
  }
  return batch;
}

template <typename T>
EvalResult evaluate(const Model<T>& model, const std::vector<Example>& examples, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ArgumentError("evaluate: batch_size must be positive");
  EvalResult r;
  std::size_t correct = 0;
  double depth_sum = 0.0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, examples.size() - start);
    const std::span<const std::size_t> idx(order.data() + start, count);
    auto batch = make_batch(model, examples, idx);
    Tape<T> tape(false);
    ForwardOptions<T> opts;
    opts.counter = &r.counter;
    auto out = model.forward(tape, batch, rng, opts);
    for (const auto& p : predict(out.logits)) r.predictions.push_back(p.label);
    for (auto d : out.assignment.depths) depth_sum += static_cast<double>(d);
    r.words += batch.words();
  }
  for (std::size_t i = 0; i < examples.size(); ++i) correct += r.predictions[i] == examples[i].label ? 1 : 0;
  r.accuracy = examples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(examples.size());
  r.mean_depth = r.words == 0 ? 0.0 : depth_sum / static_cast<double>(r.words);
  return r;
}

template <typename T>
EpochMetrics train_epoch(Model<T>& model, Adam<T>& adam, const std::vector<Example>& examples, Rng& rng,
                         std::size_t epoch) {
  if (examples.empty()) throw ArgumentError("train_epoch: no training examples");
  const auto& cfg = model.config();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t batches = (examples.size() + cfg.batch_size - 1) / cfg.batch_size;

  EpochMetrics m;
  m.epoch = epoch;
  double loss_sum = 0.0, depth_sum = 0.0;
  std::size_t correct = 0, words = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t start = b * cfg.batch_size;
    const std::size_t count = std::min(cfg.batch_size, examples.size() - start);
    const std::span<const std::size_t> idx(order.data() + start, count);
    auto batch = make_batch(model, examples, idx);

    Tape<T> tape;
    ForwardOptions<T> opts;
    opts.training = true;
    auto out = model.forward(tape, batch, rng, opts);
    auto loss = model.loss(tape, out, std::span<const std::size_t>(batch.labels));
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << epoch << ", batch " << b << "; parameter norms:";
      for (const auto& e : model.parameters().entries()) {
        double sq = 0.0;
        for (T x : e.tensor.values()) sq += static_cast<double>(x) * static_cast<double>(x);
        os << ' ' << e.name << '=' << std::sqrt(sq);
      }
      throw NumericalError(os.str());
    }
    model.parameters().zero_grad();
    tape.backward(loss);
    clip_global_norm(model.parameters(), cfg.clip_norm);
    m.learning_rate = learning_rate_at(cfg.learning_rate, cfg.lr_decay, adam.steps(), batches);
    adam.step(m.learning_rate);

    loss_sum += value * static_cast<double>(count);
    const auto preds = predict(out.logits);
    for (std::size_t i = 0; i < count; ++i) correct += preds[i].label == batch.labels[i] ? 1 : 0;
    for (auto d : out.assignment.depths) depth_sum += static_cast<double>(d);
    words += batch.words();
  }
  m.loss = loss_sum / static_cast<double>(examples.size());
  m.train_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  m.mean_depth = depth_sum / static_cast<double>(words);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

template <typename T>
FitResult fit(Model<T>& model, const std::vector<Example>& train, const std::vector<Example>& dev, Rng& rng,
              const EpochCallback& on_epoch) {
  const auto& cfg = model.config();
  Adam<T> adam(model.parameters());
  FitResult result;
  std::vector<std::vector<T>> best;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto m = train_epoch(model, adam, train, rng, epoch);
    if (!dev.empty()) {
      Rng eval_rng(cfg.seed);
      m.dev_accuracy = evaluate(model, dev, cfg.batch_size, eval_rng).accuracy;
      if (m.dev_accuracy > result.best_dev_accuracy) {
        result.best_dev_accuracy = m.dev_accuracy;
        result.best_epoch = epoch;
        best.clear();
        for (const auto& e : model.parameters().entries()) best.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
        stale = 0;
      } else {
        ++stale;
      }
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (!dev.empty() && stale >= cfg.patience) break;
  }
  if (!best.empty()) {
    auto& entries = model.parameters().entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      std::copy(best[p].begin(), best[p].end(), entries[p].tensor.mutable_values().begin());
    }
  }
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> dev_split(std::size_t n, double fraction,
                                                                         std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ArgumentError("dev_split: fraction must lie in [0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto dev_n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> dev(order.begin(), order.begin() + dev_n);
  std::vector<std::size_t> train(order.begin() + dev_n, order.end());
  std::sort(dev.begin(), dev.end());
  std::sort(train.begin(), train.end());
  return {train, dev};
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("kfold_split: k must be at least 2");
  if (n < k) throw ArgumentError("kfold_split: " + std::to_string(n) + " examples for " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

template <typename T>
CvResult cross_validate(const std::vector<Example>& examples, std::size_t k, const Config& config,
                        const ModelFactory<T>& make_model) {
  const auto folds = kfold_split(examples.size(), k, config.seed);
  CvResult r;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Example> pool, test;
    for (auto i : folds[f]) test.push_back(examples[i]);
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      for (auto i : folds[g]) pool.push_back(examples[i]);
    }
    auto [train_idx, dev_idx] = dev_split(pool.size(), config.dev_fraction, config.seed + f);
    std::vector<Example> train, dev;
    for (auto i : train_idx) train.push_back(pool[i]);
    for (auto i : dev_idx) dev.push_back(pool[i]);

    Rng rng(config.seed + f);
    auto model = make_model(train, rng);
    fit(model, train, dev, rng);
    Rng eval_rng(config.seed);
    r.fold_accuracies.push_back(evaluate(model, test, config.batch_size, eval_rng).accuracy);
  }
  r.mean = std::accumulate(r.fold_accuracies.begin(), r.fold_accuracies.end(), 0.0) /
           static_cast<double>(r.fold_accuracies.size());
  return r;
}

#define ADASLSTM_INSTANTIATE_TRAIN(T)                                                                         \
  template class Adam<T>;                                                                                    \
  template double clip_global_norm(ParameterStore<T>&, double);                                              \
  template double global_grad_norm(const ParameterStore<T>&);                                                \
  template TokenBatch make_batch(const Model<T>&, const std::vector<Example>&, std::span<const std::size_t>); \
  template EvalResult evaluate(const Model<T>&, const std::vector<Example>&, std::size_t, Rng&);              \
  template EpochMetrics train_epoch(Model<T>&, Adam<T>&, const std::vector<Example>&, Rng&, std::size_t);    \
  template FitResult fit(Model<T>&, const std::vector<Example>&, const std::vector<Example>&, Rng&,          \
                         const EpochCallback&);                                                              \
  template CvResult cross_validate(const std::vector<Example>&, std::size_t, const Config&, const ModelFactory<T>&);

ADASLSTM_INSTANTIATE_TRAIN(float)
ADASLSTM_INSTANTIATE_TRAIN(double)

}  // namespace adaslstm
