#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "adaslstm/checkpoint.hpp"
#include "adaslstm/errors.hpp"
#include "adaslstm/experiment.hpp"

namespace py = pybind11;
using namespace adaslstm;

namespace {

// Configs cross the boundary as {key: str} dicts so every key keeps its
// config-file spelling and validation.
Config config_from(const py::dict& d) {
  Config c;
  for (const auto& [k, v] : d) set_config_value(c, py::str(k), py::str(v));
  validate(c);
  return c;
}

py::dict config_to(const Config& c) {
  py::dict d;
  for (const auto& key : config_keys()) d[py::str(key)] = get_config_value(c, key);
  return d;
}

struct PyModel {
  Model<float> model;

  std::vector<std::pair<std::string, std::vector<double>>> predict(const std::vector<std::vector<std::string>>& s,
                                                                   std::size_t seed) const {
    Tape<float> tape(false);
    Rng rng(seed);
    auto out = model.forward(tape, model.encode(s), rng);
    std::vector<std::pair<std::string, std::vector<double>>> r;
    for (auto& p : adaslstm::predict(out.logits)) r.emplace_back(model.labels()[p.label], std::move(p.distribution));
    return r;
  }

  std::vector<std::vector<std::pair<std::string, std::size_t>>> depths(const std::vector<std::vector<std::string>>& s,
                                                                       std::size_t seed) const {
    Rng rng(seed);
    auto h = depth_histogram(model, s, model.config().batch_size, rng);
    std::vector<std::vector<std::pair<std::string, std::size_t>>> r;
    for (const auto& sentence : h.sentences) {
      auto& row = r.emplace_back();
      for (const auto& rec : sentence) row.emplace_back(rec.token, rec.depth);
    }
    return r;
  }

  double accuracy(const std::vector<std::vector<std::string>>& s, const std::vector<std::string>& gold,
                  std::size_t seed) const {
    if (s.size() != gold.size()) throw ArgumentError("sentences and labels differ in length");
    std::vector<Example> ex;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& labels = model.labels();
      const auto it = std::find(labels.begin(), labels.end(), gold[i]);
      if (it == labels.end()) throw ArgumentError("unknown label '" + gold[i] + "'");
      ex.push_back({s[i], static_cast<std::size_t>(it - labels.begin())});
    }
    Rng rng(seed);
    return evaluate(model, ex, model.config().batch_size, rng).accuracy;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive-depth S-LSTM text classifier";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("config_keys", &config_keys);
  m.def("default_config", [] { return config_to(Config{}); });
  m.def("load_config", [](const std::filesystem::path& p) { return config_to(load_config(p)); });
  m.def("normalize_config", [](const py::dict& d) { return config_to(config_from(d)); },
        "Defaults filled in and validated.");

  m.def("tokenize", [](const std::string& s) { return tokenize(s); });
  m.def(
      "ingest",
      [](const std::filesystem::path& path, const std::string& format) {
        auto data = ingest(path, parse_data_format(format));
        std::vector<std::pair<std::string, std::vector<std::string>>> out;
        for (auto& r : data.records) out.emplace_back(r.label, r.tokens);
        return out;
      },
      py::arg("path"), py::arg("format") = "tsv");

  m.def(
      "perturbed_softmax",
      [](const std::vector<double>& logits, const std::vector<double>& noise, double tau) {
        return perturbed_softmax(std::span<const double>(logits), std::span<const double>(noise), tau);
      },
      py::arg("logits"), py::arg("noise"), py::arg("tau") = 0.001);
  m.def(
      "select_depth",
      [](const std::vector<double>& logits, const std::string& strategy, double tau, std::size_t seed) {
        Rng rng(seed);
        const auto s = parse_depth_strategy(strategy);
        if (s == DepthStrategy::Gumbel) return select_gumbel(std::span<const double>(logits), tau, rng);
        Tape<double> tape(false);
        auto p = depth_probs(tape, Tensor<double>({logits.size()}, logits, false));
        const std::span<const double> ps(p.values());
        return s == DepthStrategy::Hard ? select_hard(ps) : select_soft(ps);
      },
      py::arg("logits"), py::arg("strategy") = "gumbel", py::arg("tau") = 0.001, py::arg("seed") = 1,
      "1-based depth chosen from depth logits.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const py::dict& config, const std::vector<std::vector<std::string>>& corpus,
                       const std::vector<std::string>& labels) {
             auto c = config_from(config);
             Rng rng(c.seed);
             return PyModel{Model<float>::create(c, build_vocab(corpus, c.min_freq), labels, rng)};
           }),
           py::arg("config"), py::arg("corpus"), py::arg("labels"),
           "Untrained model with a vocabulary built from `corpus`.")
      .def_static("load", [](const std::filesystem::path& p) { return PyModel{load_checkpoint<float>(p)}; })
      .def("save", [](const PyModel& m, const std::filesystem::path& p) { save_checkpoint(m.model, p); })
      .def_property_readonly("labels", [](const PyModel& m) { return m.model.labels(); })
      .def_property_readonly("config", [](const PyModel& m) { return config_to(m.model.config()); })
      .def_property_readonly("parameter_count", [](const PyModel& m) { return m.model.parameters().scalar_count(); })
      .def("predict", &PyModel::predict, py::arg("sentences"), py::arg("seed") = 1,
           "(label, distribution) per tokenized sentence.")
      .def("depths", &PyModel::depths, py::arg("sentences"), py::arg("seed") = 1,
           "(token, executed depth) records per sentence.")
      .def("accuracy", &PyModel::accuracy, py::arg("sentences"), py::arg("labels"), py::arg("seed") = 1)
      .def(
          "fit",
          [](PyModel& m, const std::vector<std::vector<std::string>>& train_s,
             const std::vector<std::string>& train_y, const std::vector<std::vector<std::string>>& dev_s,
             const std::vector<std::string>& dev_y) {
            auto to_ex = [&](const auto& s, const auto& y) {
              if (s.size() != y.size()) throw ArgumentError("sentences and labels differ in length");
              std::vector<Example> ex;
              const auto& labels = m.model.labels();
              for (std::size_t i = 0; i < s.size(); ++i) {
                const auto it = std::find(labels.begin(), labels.end(), y[i]);
                if (it == labels.end()) throw ArgumentError("unknown label '" + y[i] + "'");
                ex.push_back({s[i], static_cast<std::size_t>(it - labels.begin())});
              }
              return ex;
            };
            Rng rng(m.model.config().seed);
            py::gil_scoped_release release;
            auto r = fit(m.model, to_ex(train_s, train_y), to_ex(dev_s, dev_y), rng);
            std::vector<double> losses;
            for (const auto& e : r.history) losses.push_back(e.loss);
            return losses;
          },
          py::arg("train_sentences"), py::arg("train_labels"), py::arg("dev_sentences"), py::arg("dev_labels"),
          "Trains with early stopping on the dev set; returns per-epoch training loss.");

  m.def(
      "run_experiment",
      [](const py::dict& config) {
        auto c = config_from(config);
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c);
        }
        return r.to_json().dump();
      },
      py::arg("config"), "Trains and evaluates per `config`; returns the report as a JSON string.");
}
