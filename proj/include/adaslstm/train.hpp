#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "adaslstm/data.hpp"
#include "adaslstm/model.hpp"

namespace adaslstm {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of a parameter store.
template <typename T>
class Adam {
 public:
  explicit Adam(ParameterStore<T>& store, AdamOptions options = {});

  /// One update with learning rate `lr` from the current gradients.
  void step(double lr);
  std::size_t steps() const noexcept { return step_; }

 private:
  ParameterStore<T>* store_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

/// base * decay^(step / steps_per_epoch), a smooth per-epoch exponential decay.
double learning_rate_at(double base, double decay, std::size_t step, std::size_t steps_per_epoch);

/// Scales the buffers so their joint L2 norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(std::span<const std::span<double>> grads, double max_norm);
/// Same over the gradients of the trainable parameters.
template <typename T>
double clip_global_norm(ParameterStore<T>& store, double max_norm);
template <typename T>
double global_grad_norm(const ParameterStore<T>& store);

/// Rows of `examples` at `indices` as a batch carrying labels.
template <typename T>
TokenBatch make_batch(const Model<T>& model, const std::vector<Example>& examples,
                      std::span<const std::size_t> indices);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double dev_accuracy = -1.0;  // negative when there is no dev set
  double learning_rate = 0.0;
  double mean_depth = 0.0;
  double seconds = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_depth = 0.0;
  std::vector<std::size_t> predictions;
  TransitionCounter counter;
  std::size_t words = 0;
};

/// Eval-mode pass (no dropout) in batches of `batch_size`, in example order.
template <typename T>
EvalResult evaluate(const Model<T>& model, const std::vector<Example>& examples, std::size_t batch_size, Rng& rng);

/// One shuffled pass: forward with dropout, loss, backward, clipping, Adam.
/// A non-finite loss throws NumericalError naming the batch and the parameter norms.
template <typename T>
EpochMetrics train_epoch(Model<T>& model, Adam<T>& adam, const std::vector<Example>& examples, Rng& rng,
                         std::size_t epoch);

struct FitResult {
  std::vector<EpochMetrics> history;
  double best_dev_accuracy = -1.0;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains for config.epochs, stopping after config.patience epochs without a
/// dev improvement; the best dev parameters are restored at the end.
template <typename T>
FitResult fit(Model<T>& model, const std::vector<Example>& train, const std::vector<Example>& dev, Rng& rng,
              const EpochCallback& on_epoch = {});

/// Seeded split of n indices into (train, dev) with round(fraction * n) dev items.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> dev_split(std::size_t n, double fraction,
                                                                         std::uint64_t seed);

/// Seeded partition of n indices into k folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvResult {
  std::vector<double> fold_accuracies;
  double mean = 0.0;
};

template <typename T>
using ModelFactory = std::function<Model<T>(const std::vector<Example>& train, Rng& rng)>;

/// k models, each trained on k - 1 folds (a dev_fraction slice held out for
/// early stopping) and tested on the remaining fold.
template <typename T>
CvResult cross_validate(const std::vector<Example>& examples, std::size_t k, const Config& config,
                        const ModelFactory<T>& make_model);

}  // namespace adaslstm
