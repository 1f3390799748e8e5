#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adaslstm/data.hpp"
#include "adaslstm/model.hpp"
#include "adaslstm/train.hpp"
#include "json.hpp"

namespace adaslstm {

/// Training, dev and test examples with the shared label set and training vocabulary.
struct PreparedData {
  std::vector<Example> train, dev, test;
  std::vector<std::string> labels;
  Vocab vocab;
};

/// Reads the files named by the config. Without a dev file a seeded
/// dev_fraction slice of the training data is held out. Missing train or test
/// paths are a ConfigError, unreadable or malformed files ArgumentError/ParseError.
PreparedData prepare_data(const Config& config);

/// Model for `config` over `data`, loading pretrained vectors when configured.
Model<float> build_model(const Config& config, const PreparedData& data, Rng& rng);

struct RunReport {
  Config config;
  std::vector<EpochMetrics> epochs;
  double test_accuracy = 0.0;
  double throughput = 0.0;  // test samples per second, eval mode
  double mean_depth = 0.0;
  TransitionCounter transitions;
  std::size_t test_sentences = 0;
  double wall_clock = 0.0;
  std::optional<CvResult> cv;

  nlohmann::json to_json() const;
  std::string summary() const;
};

/// Writes report.json and summary.txt into `dir`, creating it if needed.
void write_report(const RunReport& report, const std::filesystem::path& dir);

/// Full run: data, model, training with early stopping, test evaluation. With
/// cv_folds >= 2 the training data is also cross-validated. The trained model
/// is moved into `trained` when given.
RunReport run_experiment(const Config& config, const EpochCallback& on_epoch = {},
                         std::optional<Model<float>>* trained = nullptr);

struct SpeedReport {
  double mean = 0.0;    // samples per second
  double stddev = 0.0;
  std::vector<double> samples;
  TransitionCounter counter;  // one timed pass over the data
  std::size_t sentences = 0;
  std::size_t words = 0;
  double mean_depth = 0.0;

  nlohmann::json to_json() const;
};

/// Eval-mode forward passes over `examples` in batches, after `warmup`
/// untimed passes; each of `repeats` timed passes yields one throughput
/// sample. forced_depth > 0 makes every word run that many layers.
template <typename T>
SpeedReport benchmark_speed(const Model<T>& model, const std::vector<Example>& examples, std::size_t batch_size,
                            std::size_t warmup, std::size_t repeats, std::size_t forced_depth = 0);

struct DepthRecord {
  std::string token;
  std::size_t depth = 0;
};

struct DepthHistogram {
  std::vector<std::vector<DepthRecord>> sentences;
  std::vector<std::size_t> counts;  // counts[d] for d in 0..L; counts[0] stays 0

  std::size_t total() const;
  /// One {"token", "depth"} object per line.
  std::string json_lines() const;
  std::string bar_chart(std::size_t width = 50) const;
  nlohmann::json to_json() const;
};

template <typename T>
DepthHistogram depth_histogram(const Model<T>& model, const std::vector<std::vector<std::string>>& sentences,
                               std::size_t batch_size, Rng& rng);

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Full model, w/o adaptive depth, w/o Bi-LSTM, sinusoidal and learned
/// position embeddings, hard and soft selection.
std::vector<AblationVariant> default_ablation_suite();
/// Parses "name: key=value, key=value" lines ('#' comments).
std::vector<AblationVariant> parse_ablation_suite(std::istream& in);

struct AblationRow {
  std::string name;
  std::vector<double> accuracies;
  std::vector<double> speeds;
  double accuracy_mean = 0.0, accuracy_stddev = 0.0;
  double speed_mean = 0.0, speed_stddev = 0.0;
  double mean_depth = 0.0;
  double word_transitions_per_sentence = 0.0;
  std::vector<RunReport> runs;
};

/// Every variant is trained `seeds` times with seeds config.seed, +1, ...
std::vector<AblationRow> run_ablation(const Config& base, const std::vector<AblationVariant>& suite,
                                      std::size_t seeds = 3,
                                      const std::function<void(const std::string&)>& log = {});
std::string format_ablation_table(const std::vector<AblationRow>& rows);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation; 0 for fewer than two values.
double stddev_of(const std::vector<double>& v);

}  // namespace adaslstm
