#include "adaslstm/embed.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "adaslstm/errors.hpp"

namespace adaslstm {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

}  // namespace

template <typename T>
EmbeddingTable<T> load_pretrained(const std::filesystem::path& path, const Vocab& vocab, std::size_t dim, Rng& rng) {
  if (dim == 0) throw ArgumentError("load_pretrained: dimension must be positive");
  std::ifstream in(path);
  if (!in) throw ArgumentError("load_pretrained: cannot open " + path.string());

  std::vector<T> values(vocab.size() * dim);
  std::vector<std::uint8_t> filled(vocab.size(), 0);
  std::string line;
  std::size_t line_no = 0;
  std::size_t first_width = 0;
  bool first_mismatch = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_spaces(line);
    if (fields.empty()) continue;
    const std::size_t width = fields.size() - 1;
    if (first_width == 0) {
      first_width = width;
      first_mismatch = width != dim;
      if (first_mismatch) continue;  // decided on the next line: dim mismatch or malformed line
    } else if (first_mismatch) {
      if (width == first_width) {
        throw ArgumentError("load_pretrained: file holds " + std::to_string(first_width) +
                            "-dimensional vectors, expected " + std::to_string(dim));
      }
      throw ParseError("load_pretrained: expected " + std::to_string(dim) + " values, found " +
                           std::to_string(first_width),
                       1);
    }
    if (width != dim) {
      throw ParseError("load_pretrained: expected " + std::to_string(dim) + " values, found " + std::to_string(width),
                       line_no);
    }
    const std::size_t id = vocab.id(fields[0]);
    if (!vocab.contains(fields[0]) || id == Vocab::kPad || id == Vocab::kUnk || filled[id]) continue;
    for (std::size_t k = 0; k < dim; ++k) {
      const std::string field(fields[k + 1]);
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size()) {
        throw ParseError("load_pretrained: malformed number '" + field + "'", line_no);
      }
      values[id * dim + k] = static_cast<T>(v);
    }
    filled[id] = 1;
  }
  if (first_mismatch) {
    throw ParseError("load_pretrained: expected " + std::to_string(dim) + " values, found " +
                         std::to_string(first_width),
                     1);
  }
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (filled[id] || id == Vocab::kPad) continue;
    for (std::size_t k = 0; k < dim; ++k) values[id * dim + k] = static_cast<T>(dist(rng));
  }
  return {Tensor<T>({vocab.size(), dim}, std::move(values), false), false};
}

std::vector<double> sinusoidal_embedding(double position, std::size_t dim) {
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const std::size_t two_j = k - (k % 2);
    const double angle = position / std::pow(10000.0, static_cast<double>(two_j) / static_cast<double>(dim));
    out[k] = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return out;
}

template <typename T>
Tensor<T> sinusoidal_depth(std::size_t depth, std::size_t max_depth, std::size_t dim) {
  if (depth > max_depth) {
    throw ArgumentError("sinusoidal_depth: depth " + std::to_string(depth) + " outside [0, " +
                        std::to_string(max_depth) + "]");
  }
  auto e = sinusoidal_embedding(static_cast<double>(depth), dim);
  return Tensor<T>({dim}, std::vector<T>(e.begin(), e.end()));
}

template <typename T>
CharCnn<T> CharCnn<T>::create(ParameterStore<T>& store, std::size_t char_dim, Rng& rng) {
  CharCnn cnn;
  cnn.char_table = store.create("char.embedding", {CharSet::kSize, char_dim}, Init::Xavier, rng);
  cnn.filters = store.create("char.filters", {kCharWindow * char_dim, kCharFeatures}, Init::Xavier, rng);
  cnn.bias = store.create("char.bias", {kCharFeatures}, Init::Zeros, rng);
  return cnn;
}

template <typename T>
Tensor<T> CharCnn<T>::forward(Tape<T>& tape, const std::vector<std::vector<int>>& words) const {
  // window w of a word of length n covers characters (w-1, w, w+1); out-of-range
  // and PAD characters gather as -1, i.e. a zero embedding
  std::vector<std::ptrdiff_t> lhs, mid, rhs;
  std::vector<std::size_t> offsets{0};
  for (const auto& word : words) {
    std::size_t n = word.size();
    while (n > 0 && word[n - 1] == CharSet::kPad) --n;
    if (n == 0) throw ArgumentError("char_cnn: empty word");
    auto at = [&](std::ptrdiff_t i) -> std::ptrdiff_t {
      if (i < 0 || i >= static_cast<std::ptrdiff_t>(n) || word[i] == CharSet::kPad) return -1;
      const int id = word[i];
      return (id < 0 || id >= static_cast<int>(CharSet::kSize)) ? CharSet::kUnk : id;
    };
    for (std::size_t w = 0; w < n; ++w) {
      const auto i = static_cast<std::ptrdiff_t>(w);
      lhs.push_back(at(i - 1));
      mid.push_back(at(i));
      rhs.push_back(at(i + 1));
    }
    offsets.push_back(offsets.back() + n);
  }
  auto windows = concat<T>(tape,
                           {gather_rows(tape, char_table, std::span<const std::ptrdiff_t>(lhs)),
                            gather_rows(tape, char_table, std::span<const std::ptrdiff_t>(mid)),
                            gather_rows(tape, char_table, std::span<const std::ptrdiff_t>(rhs))},
                           1);
  auto features = relu(tape, linear(tape, windows, filters, bias));
  return segment_max(tape, features, std::span<const std::size_t>(offsets));
}

template <typename T>
Tensor<T> CharCnn<T>::forward(Tape<T>& tape, std::span<const int> word) const {
  auto rows = forward(tape, std::vector<std::vector<int>>{std::vector<int>(word.begin(), word.end())});
  return reshape(tape, rows, {kCharFeatures});
}

template <typename T>
Tensor<T> assemble_tokens(Tape<T>& tape, const TokenBatch& batch, const EmbeddingTable<T>& words,
                          const CharCnn<T>& chars) {
  std::vector<std::ptrdiff_t> ids(batch.word_ids);
  const auto rows = static_cast<std::ptrdiff_t>(words.table.rows());
  for (auto& id : ids) {
    if (id < 0 || id >= rows) id = static_cast<std::ptrdiff_t>(Vocab::kUnk);
  }
  auto word_part = embedding_lookup(tape, words.table, std::span<const std::ptrdiff_t>(ids));
  auto char_part = chars.forward(tape, batch.char_ids);
  return concat<T>(tape, {word_part, char_part}, 1);
}

template <typename T>
Tensor<T> DepthEmbedding<T>::forward(Tape<T>& tape, std::span<const std::size_t> depths) const {
  const std::size_t max_d = max_depth();
  const std::size_t dim = projection.rows();
  std::vector<std::ptrdiff_t> rows(depths.size());
  std::vector<T> sinusoid(depths.size() * dim);
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (depths[i] < 1 || depths[i] > max_d) {
      throw ArgumentError("depth " + std::to_string(depths[i]) + " outside [1, " + std::to_string(max_d) + "]");
    }
    rows[i] = static_cast<std::ptrdiff_t>(depths[i] - 1);
    auto s = sinusoidal_embedding(static_cast<double>(depths[i]), dim);
    std::copy(s.begin(), s.end(), sinusoid.begin() + i * dim);
  }
  auto trainable = gather_rows(tape, transpose(tape, projection), std::span<const std::ptrdiff_t>(rows));
  return add(tape, trainable, Tensor<T>({depths.size(), dim}, std::move(sinusoid)));
}

template <typename T>
Tensor<T> refine_tokens(Tape<T>& tape, const Tensor<T>& tokens, std::span<const std::size_t> depths,
                        const DepthEmbedding<T>& depth_embedding) {
  if (tokens.rows() != depths.size() || tokens.rank() != 2) {
    throw DimensionError("refine_tokens: " + std::to_string(depths.size()) + " depths for tokens " +
                         shape_string(tokens.shape()));
  }
  return concat<T>(tape, {tokens, depth_embedding.forward(tape, depths)}, 1);
}

#define ADASLSTM_INSTANTIATE_EMBED(T)                                                                          \
  template EmbeddingTable<T> load_pretrained(const std::filesystem::path&, const Vocab&, std::size_t, Rng&);  \
  template Tensor<T> sinusoidal_depth(std::size_t, std::size_t, std::size_t);                                 \
  template struct CharCnn<T>;                                                                                 \
  template Tensor<T> assemble_tokens(Tape<T>&, const TokenBatch&, const EmbeddingTable<T>&, const CharCnn<T>&); \
  template struct DepthEmbedding<T>;                                                                          \
  template Tensor<T> refine_tokens(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>,                  \
                                   const DepthEmbedding<T>&);

ADASLSTM_INSTANTIATE_EMBED(float)
ADASLSTM_INSTANTIATE_EMBED(double)

}  // namespace adaslstm
