#include "adaslstm/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "adaslstm/errors.hpp"
#include "json.hpp"

namespace adaslstm {

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

// One CSV record on one line; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"' && fields.back().empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
      was_quoted = false;
    } else {
      if (was_quoted) throw ParseError("csv: text after closing quote", line_no);
      fields.back() += ch;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field", line_no);
  return fields;
}

}  // namespace

DataFormat parse_data_format(const std::string& name) {
  if (name == "tsv") return DataFormat::Tsv;
  if (name == "csv") return DataFormat::Csv;
  if (name == "jsonl") return DataFormat::Jsonl;
  throw ArgumentError("unknown data format '" + name + "' (tsv, csv, jsonl)");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (const char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (u < 128 && std::ispunct(u)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current += ch;
    }
  }
  flush();
  return tokens;
}

Dataset ingest(std::istream& in, DataFormat format) {
  Dataset data;
  std::set<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    DatasetRecord rec;
    if (format == DataFormat::Jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("jsonl: ") + e.what(), line_no);
      }
      if (!j.is_object()) throw ParseError("jsonl: expected an object", line_no);
      for (const char* key : {"label", "text"}) {
        if (!j.contains(key)) throw ParseError(std::string("jsonl: missing \"") + key + "\"", line_no);
      }
      const auto& label = j["label"];
      if (label.is_string()) {
        rec.label = label.get<std::string>();
      } else if (label.is_number_integer()) {
        rec.label = std::to_string(label.get<long long>());
      } else {
        throw ParseError("jsonl: \"label\" must be a string or integer", line_no);
      }
      if (!j["text"].is_string()) throw ParseError("jsonl: \"text\" must be a string", line_no);
      rec.text = j["text"].get<std::string>();
    } else {
      const auto fields = format == DataFormat::Tsv ? split_tsv(line) : split_csv(line, line_no);
      if (fields.size() != 2) {
        throw ParseError("expected 2 fields (label, text), found " + std::to_string(fields.size()), line_no);
      }
      rec.label = fields[0];
      rec.text = fields[1];
    }
    if (rec.label.empty()) throw ParseError("empty label", line_no);
    rec.tokens = tokenize(rec.text);
    if (rec.tokens.empty()) throw ParseError("text has no tokens", line_no);
    labels.insert(rec.label);
    data.records.push_back(std::move(rec));
  }
  data.labels.assign(labels.begin(), labels.end());
  return data;
}

Dataset ingest(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open dataset " + path.string());
  return ingest(in, format);
}

std::vector<Example> to_examples(const Dataset& data, const std::vector<std::string>& labels) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& r : data.records) {
    auto it = std::lower_bound(labels.begin(), labels.end(), r.label);
    if (it == labels.end() || *it != r.label) throw ArgumentError("label '" + r.label + "' is not in the label set");
    out.push_back({r.tokens, static_cast<std::size_t>(it - labels.begin())});
  }
  return out;
}

std::vector<std::string> merge_labels(const std::vector<const Dataset*>& sets) {
  std::set<std::string> all;
  for (const auto* d : sets) {
    if (d) all.insert(d->labels.begin(), d->labels.end());
  }
  return {all.begin(), all.end()};
}

}  // namespace adaslstm
