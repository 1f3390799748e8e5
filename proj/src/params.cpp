#include "adaslstm/params.hpp"

#include <algorithm>
#include <cmath>

#include "adaslstm/errors.hpp"

namespace adaslstm {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, Rng& rng, bool trainable) {
  auto tensor = Tensor<T>::zeros(shape, trainable);
  if (init == Init::Xavier) {
    const double fan_in = shape.size() == 2 ? static_cast<double>(shape[0]) : 1.0;
    const double fan_out = static_cast<double>(shape.empty() ? 1 : shape.back());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : tensor.mutable_values()) v = static_cast<T>(dist(rng));
  }
  return adopt(name, std::move(tensor), trainable);
}

template <typename T>
Tensor<T> ParameterStore<T>::adopt(const std::string& name, Tensor<T> tensor, bool trainable) {
  if (contains(name)) throw ArgumentError("duplicate parameter name: " + name);
  tensor.set_requires_grad(trainable);
  entries_.push_back({name, tensor, trainable});
  return tensor;
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

template <typename T>
Tensor<T> ParameterStore<T>::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ArgumentError("unknown parameter: " + name);
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::string& name, bool trainable) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.trainable = trainable;
      e.tensor.set_requires_grad(trainable);
      return;
    }
  }
  throw ArgumentError("unknown parameter: " + name);
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace adaslstm
