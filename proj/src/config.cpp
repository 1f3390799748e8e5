#include "adaslstm/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "adaslstm/depth.hpp"
#include "adaslstm/errors.hpp"
#include "adaslstm/sequential.hpp"

namespace adaslstm {

namespace {

using Field = std::variant<std::string Config::*, std::size_t Config::*, double Config::*,
                           bool Config::*>;

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      {"train_path", &Config::train_path},
      {"test_path", &Config::test_path},
      {"dev_path", &Config::dev_path},
      {"format", &Config::format},
      {"pretrained_path", &Config::pretrained_path},
      {"output_dir", &Config::output_dir},
      {"word_dim", &Config::word_dim},
      {"char_dim", &Config::char_dim},
      {"hidden", &Config::hidden},
      {"max_depth", &Config::max_depth},
      {"sequential", &Config::sequential},
      {"strategy", &Config::strategy},
      {"tau", &Config::tau},
      {"adaptive", &Config::adaptive},
      {"max_positions", &Config::max_positions},
      {"freeze_pretrained", &Config::freeze_pretrained},
      {"detach_depth_input", &Config::detach_depth_input},
      {"min_freq", &Config::min_freq},
      {"epochs", &Config::epochs},
      {"batch_size", &Config::batch_size},
      {"seed", &Config::seed},
      {"dropout_embed", &Config::dropout_embed},
      {"dropout_hidden", &Config::dropout_hidden},
      {"learning_rate", &Config::learning_rate},
      {"lr_decay", &Config::lr_decay},
      {"clip_norm", &Config::clip_norm},
      {"label_smoothing", &Config::label_smoothing},
      {"patience", &Config::patience},
      {"dev_fraction", &Config::dev_fraction},
      {"cv_folds", &Config::cv_folds},
      {"bench_warmup", &Config::bench_warmup},
      {"bench_repeats", &Config::bench_repeats},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_unsigned(const std::string& key, const std::string& value) {
  Int out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

const Field& field(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void set_config_value(Config& config, const std::string& key, const std::string& value) {
  std::visit(
      [&](auto member) {
        using V = std::remove_reference_t<decltype(config.*member)>;
        if constexpr (std::is_same_v<V, std::string>) {
          config.*member = value;
        } else if constexpr (std::is_same_v<V, bool>) {
          config.*member = parse_bool(key, value);
        } else if constexpr (std::is_same_v<V, double>) {
          config.*member = parse_double(key, value);
        } else {
          config.*member = parse_unsigned<V>(key, value);
        }
      },
      field(key));
}

std::string get_config_value(const Config& config, const std::string& key) {
  return std::visit(
      [&](auto member) -> std::string {
        const auto& v = config.*member;
        using V = std::remove_cvref_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<V, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<V, double>) {
          std::ostringstream os;
          os.precision(17);
          os << v;
          return os.str();
        } else {
          return std::to_string(v);
        }
      },
      field(key));
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

Config parse_config(std::istream& in, Config base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in);
}

void validate(const Config& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.word_dim > 0, "word_dim must be positive");
  require(c.char_dim > 0, "char_dim must be positive");
  require(c.hidden > 0, "hidden must be positive");
  require(c.max_depth >= 1, "max_depth must be at least 1");
  require(c.tau > 0.0, "tau must be positive");
  require(c.batch_size > 0, "batch_size must be positive");
  require(c.dropout_embed >= 0.0 && c.dropout_embed < 1.0, "dropout_embed must lie in [0, 1)");
  require(c.dropout_hidden >= 0.0 && c.dropout_hidden < 1.0, "dropout_hidden must lie in [0, 1)");
  require(c.learning_rate > 0.0, "learning_rate must be positive");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(c.clip_norm > 0.0, "clip_norm must be positive");
  require(c.label_smoothing >= 0.0 && c.label_smoothing < 1.0, "label_smoothing must lie in [0, 1)");
  require(c.dev_fraction >= 0.0 && c.dev_fraction < 1.0, "dev_fraction must lie in [0, 1)");
  require(c.cv_folds != 1, "cv_folds must be 0 (off) or at least 2");
  require(c.format == "tsv" || c.format == "csv" || c.format == "jsonl", "format must be tsv, csv or jsonl");
  try {
    const auto seq = parse_sequential_variant(c.sequential);
    if (seq == SequentialVariant::BiLstm) require(c.hidden % 2 == 0, "hidden must be even with the Bi-LSTM");
    parse_depth_strategy(c.strategy);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json to_json(const Config& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, f] : fields()) {
    std::visit([&](auto member) { j[name] = config.*member; }, f);
  }
  return j;
}

Config config_from_json(const nlohmann::json& j) {
  Config c;
  for (const auto& [key, value] : j.items()) {
    std::visit(
        [&](auto member) {
          using V = std::remove_reference_t<decltype(c.*member)>;
          try {
            c.*member = value.template get<V>();
          } catch (const nlohmann::json::exception&) {
            throw ConfigError("config field '" + key + "' has the wrong type");
          }
        },
        field(key));
  }
  return c;
}

}  // namespace adaslstm
