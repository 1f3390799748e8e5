// adaslstm: ingest-check, train, eval, bench, depths, ablate.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "adaslstm/checkpoint.hpp"
#include "adaslstm/errors.hpp"
#include "adaslstm/experiment.hpp"

using namespace adaslstm;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "override one key, as key=value (repeatable)");
  }

  Config load() const {
    Config c = config_path.empty() ? Config{} : load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    validate(c);
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
}

int ingest_check(const std::string& path, const std::string& format) {
  auto data = ingest(fs::path(path), parse_data_format(format));
  std::map<std::string, std::size_t> per_label;
  std::size_t tokens = 0;
  for (const auto& r : data.records) {
    ++per_label[r.label];
    tokens += r.tokens.size();
  }
  nlohmann::json j{{"path", path},
                   {"records", data.size()},
                   {"labels", data.labels},
                   {"mean_length", data.size() ? static_cast<double>(tokens) / data.size() : 0.0}};
  std::cout << j.dump() << '\n';
  std::cout << std::left << std::setw(24) << "label" << "count\n";
  for (const auto& [label, n] : per_label) std::cout << std::setw(24) << label << n << '\n';
  return 0;
}

int train(const Config& config, bool quiet) {
  std::optional<Model<float>> model;
  auto report = run_experiment(
      config,
      [&](const EpochMetrics& m) {
        if (quiet) return;
        std::cerr << "epoch " << m.epoch << "  loss " << m.loss << "  train " << m.train_accuracy << "  dev "
                  << m.dev_accuracy << "  depth " << m.mean_depth << "  " << m.seconds << "s\n";
      },
      &model);
  const fs::path dir(config.output_dir);
  write_report(report, dir);
  save_checkpoint(*model, dir / "model.ckpt");
  std::cout << report.summary();
  std::cerr << "wrote " << (dir / "report.json").string() << ", " << (dir / "summary.txt").string() << ", "
            << (dir / "model.ckpt").string() << '\n';
  return 0;
}

int eval(const std::string& checkpoint, const std::string& data_path, const std::string& format, std::size_t batch) {
  auto model = load_checkpoint<float>(fs::path(checkpoint));
  auto data = ingest(fs::path(data_path), parse_data_format(format));
  auto examples = to_examples(data, model.labels());
  Rng rng(model.config().seed);
  auto r = evaluate(model, examples, batch ? batch : model.config().batch_size, rng);
  nlohmann::json j{{"accuracy", r.accuracy},
                   {"mean_depth", r.mean_depth},
                   {"sentences", examples.size()},
                   {"words", r.words},
                   {"word_transitions", r.counter.word},
                   {"global_transitions", r.counter.global}};
  std::cout << j.dump() << '\n';
  return 0;
}

int bench(const Config& config, const std::string& checkpoint, std::size_t batch, std::size_t forced_depth) {
  auto data = prepare_data(config);
  Rng rng(config.seed);
  auto model = checkpoint.empty() ? build_model(config, data, rng) : load_checkpoint<float>(fs::path(checkpoint));
  auto r = benchmark_speed(model, data.test, batch, config.bench_warmup, config.bench_repeats, forced_depth);
  auto j = r.to_json();
  j["forced_depth"] = forced_depth;
  j["batch_size"] = batch;
  std::cout << j.dump() << '\n';
  std::cout << std::fixed << std::setprecision(2) << r.mean << " +- " << r.stddev << " samples/s, mean depth "
            << r.mean_depth << ", " << r.counter.word << " word / " << r.counter.global << " global transitions\n";
  return 0;
}

int depths(const std::string& checkpoint, const std::string& data_path, const std::string& format,
           const std::string& output, std::size_t batch) {
  auto model = load_checkpoint<float>(fs::path(checkpoint));
  auto data = ingest(fs::path(data_path), parse_data_format(format));
  std::vector<std::vector<std::string>> sentences;
  for (const auto& r : data.records) sentences.push_back(r.tokens);
  Rng rng(model.config().seed);
  auto h = depth_histogram(model, sentences, batch ? batch : model.config().batch_size, rng);
  if (output.empty()) {
    std::cout << h.json_lines();
  } else {
    write_text(output, h.json_lines());
  }
  std::cerr << h.bar_chart();
  return 0;
}

int ablate(const Config& config, const std::string& suite_path, std::size_t seeds) {
  std::vector<AblationVariant> suite;
  if (suite_path.empty()) {
    suite = default_ablation_suite();
  } else {
    std::ifstream in(suite_path);
    if (!in) throw ConfigError("cannot read ablation suite " + suite_path);
    suite = parse_ablation_suite(in);
  }
  auto rows = run_ablation(config, suite, seeds, [](const std::string& m) { std::cerr << m << '\n'; });
  std::string jsonl;
  for (const auto& row : rows) {
    nlohmann::json j{{"variant", row.name},
                     {"accuracies", row.accuracies},
                     {"accuracy_mean", row.accuracy_mean},
                     {"accuracy_stddev", row.accuracy_stddev},
                     {"speeds", row.speeds},
                     {"speed_mean", row.speed_mean},
                     {"speed_stddev", row.speed_stddev},
                     {"mean_depth", row.mean_depth},
                     {"word_transitions_per_sentence", row.word_transitions_per_sentence}};
    jsonl += j.dump() + '\n';
  }
  const auto table = format_ablation_table(rows);
  write_text(fs::path(config.output_dir) / "ablation.jsonl", jsonl);
  write_text(fs::path(config.output_dir) / "ablation.txt", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive-depth S-LSTM text classifier"};
  app.require_subcommand(1);

  std::string data_path, format = "tsv", checkpoint, output, suite_path;
  std::size_t batch = 0, forced_depth = 0, seeds = 3;
  bool quiet = false;
  ConfigFlags train_flags, bench_flags, ablate_flags;

  auto* ingest_cmd = app.add_subcommand("ingest-check", "parse a dataset and print its statistics");
  ingest_cmd->add_option("--data", data_path, "dataset file")->required();
  ingest_cmd->add_option("--format", format, "tsv, csv or jsonl");

  auto* train_cmd = app.add_subcommand("train", "train, evaluate and write a report and checkpoint to output_dir");
  train_flags.attach(train_cmd);
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress");

  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", data_path, "dataset file")->required();
  eval_cmd->add_option("--format", format, "tsv, csv or jsonl");
  eval_cmd->add_option("--batch", batch, "batch size (default: the checkpoint's)");

  auto* bench_cmd = app.add_subcommand("bench", "throughput and transition counts on the test split");
  bench_flags.attach(bench_cmd);
  bench_cmd->add_option("--checkpoint", checkpoint, "benchmark this checkpoint instead of a fresh model");
  bench_cmd->add_option("--batch", batch, "batch size")->default_val(100);
  bench_cmd->add_option("--forced-depth", forced_depth, "run every word this many layers (0: model's choice)");

  auto* depths_cmd = app.add_subcommand("depths", "per-token executed depths and their histogram");
  depths_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  depths_cmd->add_option("--data", data_path, "dataset file")->required();
  depths_cmd->add_option("--format", format, "tsv, csv or jsonl");
  depths_cmd->add_option("--output", output, "JSON lines destination (default: stdout)");
  depths_cmd->add_option("--batch", batch, "batch size (default: the checkpoint's)");

  auto* ablate_cmd = app.add_subcommand("ablate", "train every ablation variant over several seeds");
  ablate_flags.attach(ablate_cmd);
  ablate_cmd->add_option("--suite", suite_path, "variant file, 'name: key=value, ...' per line");
  ablate_cmd->add_option("--seeds", seeds, "runs per variant")->default_val(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest_cmd) return ingest_check(data_path, format);
    if (*train_cmd) return train(train_flags.load(), quiet);
    if (*eval_cmd) return eval(checkpoint, data_path, format, batch);
    if (*bench_cmd) return bench(bench_flags.load(), checkpoint, batch, forced_depth);
    if (*depths_cmd) return depths(checkpoint, data_path, format, output, batch);
    if (*ablate_cmd) return ablate(ablate_flags.load(), suite_path, seeds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
