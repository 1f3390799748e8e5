#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace adaslstm {

enum class DataFormat { Tsv, Csv, Jsonl };

DataFormat parse_data_format(const std::string& name);

/// Whitespace splitting; every ASCII punctuation character becomes its own token. Case is kept.
std::vector<std::string> tokenize(std::string_view text);

struct DatasetRecord {
  std::string label;
  std::string text;
  std::vector<std::string> tokens;
};

struct Dataset {
  std::vector<DatasetRecord> records;
  /// Sorted, distinct labels of the records.
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return records.size(); }
};

/// tsv / csv: label in the first field, text in the second. jsonl: objects with
/// "label" and "text". Blank lines are skipped. Malformed rows throw ParseError
/// with the 1-based line number.
Dataset ingest(std::istream& in, DataFormat format);
Dataset ingest(const std::filesystem::path& path, DataFormat format);

/// Labeled, tokenized example ready for batching.
struct Example {
  std::vector<std::string> tokens;
  std::size_t label = 0;
};

/// Maps record labels to indices in `labels`; an unlisted label is an ArgumentError.
std::vector<Example> to_examples(const Dataset& data, const std::vector<std::string>& labels);

/// Sorted union of the label sets.
std::vector<std::string> merge_labels(const std::vector<const Dataset*>& sets);

}  // namespace adaslstm
