#include "adaslstm/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "adaslstm/errors.hpp"

namespace adaslstm {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.size() > 2) throw DimensionError("tensor rank above 2 is not supported: " + shape_string(shape));
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl_->shape;
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return impl_->values.size();
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return impl_->shape.size() == 2 ? impl_->shape[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return impl_->shape.empty() ? 1 : impl_->shape.back();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return impl_->values;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() const {
  return impl_->values;
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  return impl_->values.at(row * cols() + col);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ArgumentError("item() on tensor of shape " + shape_string(shape()));
  return impl_->values[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !impl_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
  if (impl_->grad.size() != impl_->values.size()) impl_->grad.assign(impl_->values.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->values, false);
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> outputs, std::function<void()> backward) {
  if (!recording_) return;
  Entry entry;
  entry.outputs.reserve(outputs.size());
  for (auto& out : outputs) entry.outputs.push_back(out.impl());
  entry.backward = std::move(backward);
  entries_.push_back(std::move(entry));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ArgumentError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  for (auto& entry : entries_) {
    for (auto& out : entry.outputs) out->grad.clear();
  }
  if (!loss.requires_grad()) return;
  auto seed = loss;
  seed.mutable_grad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    bool any = false;
    for (auto& out : it->outputs) any = any || !out->grad.empty();
    if (any) it->backward();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace adaslstm
