#pragma once

#include <string>
#include <vector>

#include "adaslstm/ops.hpp"
#include "adaslstm/tensor.hpp"

namespace adaslstm {

enum class Init { Zeros, Xavier };

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

/// Owns every parameter tensor of a model under a unique name, in creation order.
template <typename T>
class ParameterStore {
 public:
  /// Xavier/Glorot uniform uses U(-a, a), a = sqrt(6 / (fan_in + fan_out)) with
  /// fan_in = rows and fan_out = cols (a vector counts as 1 x n).
  Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng, bool trainable = true);
  Tensor<T> adopt(const std::string& name, Tensor<T> tensor, bool trainable);

  const std::vector<NamedParameter<T>>& entries() const noexcept { return entries_; }
  std::vector<NamedParameter<T>>& entries() noexcept { return entries_; }
  bool contains(const std::string& name) const;
  Tensor<T> get(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<NamedParameter<T>> entries_;
};

}  // namespace adaslstm
