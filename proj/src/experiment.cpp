#include "adaslstm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "adaslstm/errors.hpp"

namespace adaslstm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError(key + " is required");
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(key + " '" + path + "' does not exist");
}

Vocab vocab_for(const std::vector<Example>& train, std::size_t min_freq) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(train.size());
  for (const auto& e : train) corpus.push_back(e.tokens);
  return build_vocab(corpus, min_freq);
}

nlohmann::json epoch_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},       {"loss", m.loss},
          {"train_accuracy", m.train_accuracy}, {"dev_accuracy", m.dev_accuracy},
          {"learning_rate", m.learning_rate},   {"mean_depth", m.mean_depth},
          {"seconds", m.seconds}};
}

}  // namespace

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

PreparedData prepare_data(const Config& config) {
  validate(config);
  require_file("train_path", config.train_path);
  require_file("test_path", config.test_path);
  if (!config.dev_path.empty()) require_file("dev_path", config.dev_path);
  if (!config.pretrained_path.empty()) require_file("pretrained_path", config.pretrained_path);

  const auto format = parse_data_format(config.format);
  const auto train = ingest(std::filesystem::path(config.train_path), format);
  const auto test = ingest(std::filesystem::path(config.test_path), format);
  std::optional<Dataset> dev;
  if (!config.dev_path.empty()) dev = ingest(std::filesystem::path(config.dev_path), format);

  PreparedData out;
  out.labels = merge_labels({&train, &test, dev ? &*dev : nullptr});
  auto train_examples = to_examples(train, out.labels);
  out.test = to_examples(test, out.labels);
  if (dev) {
    out.train = std::move(train_examples);
    out.dev = to_examples(*dev, out.labels);
  } else {
    auto [train_idx, dev_idx] = dev_split(train_examples.size(), config.dev_fraction, config.seed);
    for (auto i : train_idx) out.train.push_back(train_examples[i]);
    for (auto i : dev_idx) out.dev.push_back(train_examples[i]);
  }
  if (out.train.empty()) throw ArgumentError("no training examples left after the dev split");
  out.vocab = vocab_for(out.train, config.min_freq);
  return out;
}

Model<float> build_model(const Config& config, const PreparedData& data, Rng& rng) {
  std::optional<EmbeddingTable<float>> pretrained;
  if (!config.pretrained_path.empty()) {
    pretrained = load_pretrained<float>(config.pretrained_path, data.vocab, config.word_dim, rng);
  }
  return Model<float>::create(config, data.vocab, data.labels, rng, std::move(pretrained));
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["config"] = adaslstm::to_json(config);
  j["seed"] = config.seed;
  j["epochs"] = nlohmann::json::array();
  for (const auto& m : epochs) j["epochs"].push_back(epoch_json(m));
  j["test_accuracy"] = test_accuracy;
  j["throughput"] = throughput;
  j["mean_depth"] = mean_depth;
  j["word_transitions"] = transitions.word;
  j["global_transitions"] = transitions.global;
  j["test_sentences"] = test_sentences;
  j["wall_clock"] = wall_clock;
  if (cv) j["cv"] = {{"fold_accuracies", cv->fold_accuracies}, {"mean", cv->mean}};
  return j;
}

std::string RunReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "epoch  loss      train_acc  dev_acc   lr        depth\n";
  for (const auto& m : epochs) {
    os << std::setw(5) << m.epoch << "  " << std::setw(8) << m.loss << "  " << std::setw(9) << m.train_accuracy
       << "  " << std::setw(8) << m.dev_accuracy << "  " << std::setw(8) << m.learning_rate << "  " << std::setw(6)
       << m.mean_depth << '\n';
  }
  os << "test accuracy    " << test_accuracy << '\n';
  os << "mean depth       " << mean_depth << '\n';
  os << std::setprecision(1) << "throughput       " << throughput << " samples/s\n";
  os << "word transitions " << transitions.word << " over " << test_sentences << " sentences\n";
  if (cv) {
    os << std::setprecision(4) << "cv mean accuracy " << cv->mean << " over " << cv->fold_accuracies.size()
       << " folds\n";
  }
  os << std::setprecision(1) << "wall clock       " << wall_clock << " s\n";
  return os.str();
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream json(dir / "report.json");
  std::ofstream text(dir / "summary.txt");
  if (!json || !text) throw ArgumentError("cannot write report files into " + dir.string());
  json << report.to_json().dump(2) << '\n';
  text << report.summary();
}

RunReport run_experiment(const Config& config, const EpochCallback& on_epoch, std::optional<Model<float>>* trained) {
  const auto t0 = Clock::now();
  const auto data = prepare_data(config);
  RunReport report;
  report.config = config;

  if (config.cv_folds >= 2) {
    std::vector<Example> pool = data.train;
    pool.insert(pool.end(), data.dev.begin(), data.dev.end());
    ModelFactory<float> factory = [&](const std::vector<Example>& train, Rng& rng) {
      PreparedData fold;
      fold.labels = data.labels;
      fold.vocab = vocab_for(train, config.min_freq);
      return build_model(config, fold, rng);
    };
    report.cv = cross_validate<float>(pool, config.cv_folds, config, factory);
  }

  Rng rng(config.seed);
  auto model = build_model(config, data, rng);
  report.epochs = fit(model, data.train, data.dev, rng, on_epoch).history;

  Rng eval_rng(config.seed);
  const auto t_eval = Clock::now();
  const auto eval = evaluate(model, data.test, config.batch_size, eval_rng);
  const double eval_seconds = seconds_since(t_eval);
  report.test_accuracy = eval.accuracy;
  report.mean_depth = eval.mean_depth;
  report.transitions = eval.counter;
  report.test_sentences = data.test.size();
  report.throughput = eval_seconds > 0.0 ? static_cast<double>(data.test.size()) / eval_seconds : 0.0;
  report.wall_clock = seconds_since(t0);
  if (trained) trained->emplace(std::move(model));
  return report;
}

nlohmann::json SpeedReport::to_json() const {
  return {{"samples_per_second", mean}, {"stddev", stddev},
          {"samples", samples},         {"word_transitions", counter.word},
          {"global_transitions", counter.global}, {"sentences", sentences},
          {"words", words},             {"mean_depth", mean_depth}};
}

template <typename T>
SpeedReport benchmark_speed(const Model<T>& model, const std::vector<Example>& examples, std::size_t batch_size,
                            std::size_t warmup, std::size_t repeats, std::size_t forced_depth) {
  if (examples.empty() || batch_size == 0 || repeats == 0) {
    throw ArgumentError("benchmark_speed: needs examples, a positive batch size and at least one repeat");
  }
  std::vector<TokenBatch> batches;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t s = 0; s < examples.size(); s += batch_size) {
    const std::size_t count = std::min(batch_size, examples.size() - s);
    batches.push_back(make_batch(model, examples, std::span<const std::size_t>(order.data() + s, count)));
  }

  SpeedReport r;
  r.sentences = examples.size();
  auto pass = [&](TransitionCounter* counter, double* depth_sum) {
    Rng rng(model.config().seed);
    for (const auto& b : batches) {
      Tape<T> tape(false);
      ForwardOptions<T> opts;
      opts.forced_depth = forced_depth;
      opts.counter = counter;
      auto out = model.forward(tape, b, rng, opts);
      if (depth_sum) {
        for (auto d : out.assignment.depths) *depth_sum += static_cast<double>(d);
      }
    }
  };
  for (std::size_t i = 0; i < warmup; ++i) pass(nullptr, nullptr);
  double depth_sum = 0.0;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    pass(i == 0 ? &r.counter : nullptr, i == 0 ? &depth_sum : nullptr);
    r.samples.push_back(static_cast<double>(examples.size()) / seconds_since(t0));
  }
  for (const auto& b : batches) r.words += b.words();
  r.mean_depth = depth_sum / static_cast<double>(r.words);
  r.mean = mean_of(r.samples);
  r.stddev = stddev_of(r.samples);
  return r;
}

std::size_t DepthHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::string DepthHistogram::json_lines() const {
  std::ostringstream os;
  for (const auto& s : sentences) {
    for (const auto& r : s) os << nlohmann::json{{"token", r.token}, {"depth", r.depth}}.dump() << '\n';
  }
  return os.str();
}

std::string DepthHistogram::bar_chart(std::size_t width) const {
  const std::size_t top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::ostringstream os;
  for (std::size_t d = 1; d < counts.size(); ++d) {
    const std::size_t bar = top == 0 ? 0 : (counts[d] * width + top / 2) / top;
    os << "depth " << std::setw(2) << d << " | " << std::string(bar, '#') << ' ' << counts[d] << '\n';
  }
  return os.str();
}

nlohmann::json DepthHistogram::to_json() const {
  nlohmann::json hist = nlohmann::json::object();
  for (std::size_t d = 1; d < counts.size(); ++d) hist[std::to_string(d)] = counts[d];
  return {{"histogram", hist}, {"total", total()}};
}

template <typename T>
DepthHistogram depth_histogram(const Model<T>& model, const std::vector<std::vector<std::string>>& sentences,
                               std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ArgumentError("depth_histogram: batch_size must be positive");
  DepthHistogram h;
  h.counts.assign(model.config().max_depth + 1, 0);
  for (std::size_t s = 0; s < sentences.size(); s += batch_size) {
    const std::size_t count = std::min(batch_size, sentences.size() - s);
    std::vector<std::vector<std::string>> chunk(sentences.begin() + s, sentences.begin() + s + count);
    auto batch = model.encode(chunk);
    Tape<T> tape(false);
    auto out = model.forward(tape, batch, rng);
    for (std::size_t b = 0; b < batch.sentences(); ++b) {
      auto& records = h.sentences.emplace_back();
      for (std::size_t w = batch.offsets[b]; w < batch.offsets[b + 1]; ++w) {
        const auto d = out.assignment.depths[w];
        records.push_back({batch.tokens[w], d});
        ++h.counts[d];
      }
    }
  }
  return h;
}

std::vector<AblationVariant> default_ablation_suite() {
  return {
      {"full model", {}},
      {"w/o adaptive-depth", {{"adaptive", "false"}}},
      {"w/o Bi-LSTMs", {{"sequential", "none"}}},
      {"w/ sinusoidal position embedding", {{"sequential", "sinusoidal"}}},
      {"w/ learned position embedding", {{"sequential", "learned"}}},
      {"w/ hard selection", {{"strategy", "hard"}}},
      {"w/ soft selection", {{"strategy", "soft"}}},
  };
}

std::vector<AblationVariant> parse_ablation_suite(std::istream& in) {
  std::vector<AblationVariant> suite;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("ablation suite: expected 'name: key=value, ...'", line_no);
    AblationVariant v{trim(line.substr(0, colon)), {}};
    std::istringstream rest(line.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ParseError("ablation suite: override without '='", line_no);
      v.overrides.emplace_back(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
    if (v.name.empty()) throw ParseError("ablation suite: empty variant name", line_no);
    suite.push_back(std::move(v));
  }
  return suite;
}

std::vector<AblationRow> run_ablation(const Config& base, const std::vector<AblationVariant>& suite,
                                      std::size_t seeds, const std::function<void(const std::string&)>& log) {
  if (seeds == 0) throw ArgumentError("run_ablation: at least one seed is required");
  std::vector<AblationRow> rows;
  for (const auto& variant : suite) {
    Config cfg = base;
    for (const auto& [k, v] : variant.overrides) set_config_value(cfg, k, v);
    AblationRow row;
    row.name = variant.name;
    std::vector<double> depths, transitions;
    for (std::size_t s = 0; s < seeds; ++s) {
      cfg.seed = base.seed + s;
      if (log) log(variant.name + " seed " + std::to_string(cfg.seed));
      auto report = run_experiment(cfg);
      row.accuracies.push_back(report.test_accuracy);
      row.speeds.push_back(report.throughput);
      depths.push_back(report.mean_depth);
      transitions.push_back(static_cast<double>(report.transitions.word) /
                            static_cast<double>(std::max<std::size_t>(report.test_sentences, 1)));
      row.runs.push_back(std::move(report));
    }
    row.accuracy_mean = mean_of(row.accuracies);
    row.accuracy_stddev = stddev_of(row.accuracies);
    row.speed_mean = mean_of(row.speeds);
    row.speed_stddev = stddev_of(row.speeds);
    row.mean_depth = mean_of(depths);
    row.word_transitions_per_sentence = mean_of(transitions);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t name_width = 5;
  for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_width)) << "model" << std::right << "  " << std::setw(16)
     << "accuracy" << "  " << std::setw(18) << "speed (samples/s)" << "  " << std::setw(6) << "depth" << "  "
     << std::setw(12) << "transitions" << '\n';
  os << std::fixed;
  for (const auto& r : rows) {
    std::ostringstream acc, speed;
    acc << std::fixed << std::setprecision(2) << 100.0 * r.accuracy_mean << " ± " << 100.0 * r.accuracy_stddev;
    speed << std::fixed << std::setprecision(1) << r.speed_mean << " ± " << r.speed_stddev;
    os << std::left << std::setw(static_cast<int>(name_width)) << r.name << std::right << "  " << std::setw(17)
       << acc.str() << "  " << std::setw(19) << speed.str() << "  " << std::setw(6) << std::setprecision(2)
       << r.mean_depth << "  " << std::setw(12) << std::setprecision(1) << r.word_transitions_per_sentence << '\n';
  }
  return os.str();
}

template SpeedReport benchmark_speed(const Model<float>&, const std::vector<Example>&, std::size_t, std::size_t,
                                     std::size_t, std::size_t);
template SpeedReport benchmark_speed(const Model<double>&, const std::vector<Example>&, std::size_t, std::size_t,
                                     std::size_t, std::size_t);
template DepthHistogram depth_histogram(const Model<float>&, const std::vector<std::vector<std::string>>&,
                                        std::size_t, Rng&);
template DepthHistogram depth_histogram(const Model<double>&, const std::vector<std::vector<std::string>>&,
                                        std::size_t, Rng&);

}  // namespace adaslstm
