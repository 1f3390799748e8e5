#include "adaslstm/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "adaslstm/errors.hpp"
#include "json.hpp"

namespace adaslstm {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'D', 'A', 'S', 'L', 'S', 'T', 'M'};

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) throw ParseError("checkpoint: truncated header", 0);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, std::ostream& out) {
  nlohmann::json header;
  header["config"] = to_json(model.config());
  header["vocab"] = model.vocab().tokens();
  header["min_freq"] = model.vocab().min_freq();
  header["labels"] = model.labels();
  header["dtype"] = dtype_name<T>();
  auto& params = header["parameters"] = nlohmann::json::array();
  for (const auto& e : model.parameters().entries()) {
    params.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"trainable", e.trainable}});
  }
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : model.parameters().entries()) {
    const auto v = e.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  }
  if (!out) throw ArgumentError("checkpoint: write failed");
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("checkpoint: cannot write " + path.string());
  save_checkpoint(model, out);
}

template <typename T>
Model<T> load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ParseError("checkpoint: bad magic", 0);
  const auto length = read_u64(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw ParseError("checkpoint: truncated header", 0);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: header is not JSON: ") + e.what(), 0);
  }
  if (header.value("dtype", "") != dtype_name<T>()) {
    throw ParseError("checkpoint: stored dtype " + header.value("dtype", std::string("?")) + ", requested " +
                         dtype_name<T>(),
                     0);
  }
  auto config = config_from_json(header.at("config"));
  auto vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>(),
                                  header.at("min_freq").get<std::size_t>());
  auto labels = header.at("labels").get<std::vector<std::string>>();
  Rng rng(config.seed);
  auto model = Model<T>::create(config, std::move(vocab), std::move(labels), rng);

  const auto& stored = header.at("parameters");
  auto& entries = model.parameters().entries();
  if (stored.size() != entries.size()) throw ParseError("checkpoint: parameter count mismatch", 0);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const auto name = stored[p].at("name").get<std::string>();
    const auto shape = stored[p].at("shape").get<Shape>();
    if (name != entries[p].name || shape != entries[p].tensor.shape()) {
      throw ParseError("checkpoint: parameter " + name + " " + shape_string(shape) + " does not match model's " +
                           entries[p].name + " " + shape_string(entries[p].tensor.shape()),
                       0);
    }
    auto values = entries[p].tensor.mutable_values();
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()))) {
      throw ParseError("checkpoint: truncated data for " + name, 0);
    }
    model.parameters().set_trainable(name, stored[p].at("trainable").get<bool>());
  }
  return model;
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("checkpoint: cannot read " + path.string());
  return load_checkpoint<T>(in);
}

template void save_checkpoint(const Model<float>&, std::ostream&);
template void save_checkpoint(const Model<double>&, std::ostream&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint(std::istream&);
template Model<double> load_checkpoint(std::istream&);
template Model<float> load_checkpoint(const std::filesystem::path&);
template Model<double> load_checkpoint(const std::filesystem::path&);

}  // namespace adaslstm
