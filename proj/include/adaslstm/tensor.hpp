#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adaslstm {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// Tensors are handles: copies share storage. Values are written once when an
/// operation produces the tensor; afterwards only the gradient slot changes
/// (parameters are the exception, the optimizer updates them in place).
/// Rank 0, 1 and 2 are supported. A rank-1 tensor of length n behaves as a
/// 1 x n row in matrix operations.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const noexcept { return impl_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const;
  /// Mutable view of the values; only for parameter initialization and updates.
  std::span<T> mutable_values() const;
  T at(std::size_t row, std::size_t col) const;
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const T> grad() const;
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> mutable_grad() const;
  void zero_grad();

  /// Deep copy of the values without gradient tracking.
  Tensor detach() const;
  bool shares_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

/// Records differentiable operations of one forward pass in execution order.
///
/// A tape is confined to one thread. When constructed with recording disabled
/// operations still compute values but register nothing, which is the
/// inference path.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void record(std::vector<Tensor<T>> outputs, std::function<void()> backward);

  /// Propagates d(loss)/d(loss) = 1 back through every recorded op.
  /// Leaf gradients accumulate across calls; intermediate gradients are reset
  /// at the start of every call.
  void backward(const Tensor<T>& loss);

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::vector<std::shared_ptr<typename Tensor<T>::Impl>> outputs;
    std::function<void()> backward;
  };
  bool recording_;
  std::vector<Entry> entries_;
};

template <typename T>
void backward(Tape<T>& tape, const Tensor<T>& loss) {
  tape.backward(loss);
}

}  // namespace adaslstm
