#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace adaslstm {

/// Every tunable of a run. Field names double as config-file keys.
struct Config {
  // data
  std::string train_path;
  std::string test_path;
  std::string dev_path;
  std::string format = "tsv";
  std::string pretrained_path;
  std::string output_dir = "runs";

  // model
  std::size_t word_dim = 300;
  std::size_t char_dim = 16;
  std::size_t hidden = 400;
  std::size_t max_depth = 9;
  std::string sequential = "bilstm";
  std::string strategy = "gumbel";
  double tau = 0.001;
  bool adaptive = true;
  std::size_t max_positions = 512;
  bool freeze_pretrained = true;
  bool detach_depth_input = false;
  std::size_t min_freq = 1;

  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 100;
  std::size_t seed = 1;
  double dropout_embed = 0.3;
  double dropout_hidden = 0.2;
  double learning_rate = 0.001;
  double lr_decay = 0.97;
  double clip_norm = 5.0;
  double label_smoothing = 0.0;
  std::size_t patience = 5;
  double dev_fraction = 0.1;
  std::size_t cv_folds = 0;

  // benchmark
  std::size_t bench_warmup = 2;
  std::size_t bench_repeats = 5;
};

/// Applies one `key = value` assignment. Unknown keys and unparsable values throw ConfigError.
void set_config_value(Config& config, const std::string& key, const std::string& value);
std::string get_config_value(const Config& config, const std::string& key);
const std::vector<std::string>& config_keys();

/// Reads `key = value` lines; `#` starts a comment, blank lines are skipped.
Config parse_config(std::istream& in, Config base = {});
Config load_config(const std::filesystem::path& path);

/// Range checks across fields; throws ConfigError.
void validate(const Config& config);

nlohmann::json to_json(const Config& config);
Config config_from_json(const nlohmann::json& j);

}  // namespace adaslstm
