#include "adaslstm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "adaslstm/errors.hpp"

namespace adaslstm {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> view(std::span<const T> data, std::size_t rows, std::size_t cols) {
  return {data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<RowMat<T>> view(std::span<T> data, std::size_t rows, std::size_t cols) {
  return {data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
bool tracks(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape.recording()) return false;
  for (const auto* x : inputs) {
    if (x->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, bool track) {
  Tensor<T> out(std::move(shape), std::move(values), track);
#ifndef NDEBUG
  check_finite(out, "forward");
#endif
  return out;
}

template <typename T>
void require_defined(const Tensor<T>& x, const char* op) {
  if (!x.defined()) throw ArgumentError(std::string(op) + ": undefined tensor");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
  require_defined(x, op);
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

// Gradient of an output, or an empty span when nothing flowed into it.
template <typename T>
std::span<const T> out_grad(const Tensor<T>& out) {
  return out.grad();
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void require_index(bool ok, const char* op, std::size_t index, std::size_t bound) {
  if (!ok) {
    throw ArgumentError(std::string(op) + ": index " + std::to_string(index) + " out of range " +
                        std::to_string(bound));
  }
}

}  // namespace

template <typename T>
void check_finite(const Tensor<T>& x, const char* where) {
  for (auto v : x.values()) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in ") + where);
  }
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_matrix(b, "matmul");
  if (a.rank() == 0 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> values(m * n);
  view(std::span<T>(values), m, n).noalias() = view(a.values(), m, k) * view(b.values(), k, n);
  Shape shape = a.rank() == 2 ? Shape{m, n} : Shape{n};
  const bool track = tracks(tape, {&a, &b});
  auto out = make_output<T>(std::move(shape), std::move(values), track);
  if (track) {
    tape.record({out}, [a, b, out, m, k, n]() mutable {
      auto dout = view(out_grad(out), m, n);
      if (a.requires_grad()) view(a.mutable_grad(), m, k).noalias() += dout * view(b.values(), k, n).transpose();
      if (b.requires_grad()) view(b.mutable_grad(), k, n).noalias() += view(a.values(), m, k).transpose() * dout;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
  require_defined(x, "add_bias");
  require_defined(bias, "add_bias");
  if (bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> values(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r) {
    T* row = values.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
  }
  const bool track = tracks(tape, {&x, &bias});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [x, bias, out, m, n]() mutable {
      auto dout = out_grad(out);
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) gb[c] += dout[r * n + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_defined(x, "linear");
  require_matrix(weight, "linear");
  require_defined(bias, "linear");
  if (x.rank() == 0 || x.cols() != weight.rows()) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  if (bias.size() != weight.cols()) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  }
  return add_bias(tape, matmul(tape, x, weight), bias);
}

namespace {

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  require_same_shape(a, b, name);
  const auto av = a.values(), bv = b.values();
  std::vector<T> values(av.size());
  switch (kind) {
    case BinaryKind::Add:
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] + bv[i];
      break;
    case BinaryKind::Sub:
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] - bv[i];
      break;
    case BinaryKind::Mul:
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = av[i] * bv[i];
      break;
  }
  const bool track = tracks(tape, {&a, &b});
  auto out = make_output<T>(a.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [a, b, out, kind]() mutable {
      auto dout = out_grad(out);
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        if (kind == BinaryKind::Mul) {
          auto bv = b.values();
          for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < dout.size(); ++i) ga[i] += dout[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        if (kind == BinaryKind::Mul) {
          auto av = a.values();
          for (std::size_t i = 0; i < dout.size(); ++i) gb[i] += dout[i] * av[i];
        } else if (kind == BinaryKind::Sub) {
          for (std::size_t i = 0; i < dout.size(); ++i) gb[i] -= dout[i];
        } else {
          for (std::size_t i = 0; i < dout.size(); ++i) gb[i] += dout[i];
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(tape, a, b, BinaryKind::Add, "add");
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(tape, a, b, BinaryKind::Sub, "sub");
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(tape, a, b, BinaryKind::Mul, "mul");
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  require_defined(x, "scale");
  std::vector<T> values(x.values().begin(), x.values().end());
  for (auto& v : values) v *= factor;
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, factor]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += factor * dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  require_defined(x, "sum");
  T total = T(0);
  for (auto v : x.values()) total += v;
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{}, std::vector<T>{total}, track);
  if (track) {
    tape.record({out}, [x, out]() mutable {
      const T d = out_grad(out)[0];
      for (auto& g : x.mutable_grad()) g += d;
    });
  }
  return out;
}

template <typename T>
Tensor<T> activation(Tape<T>& tape, const Tensor<T>& x, Activation kind) {
  require_defined(x, "activation");
  const auto xv = x.values();
  std::vector<T> values(xv.size());
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < xv.size(); ++i) values[i] = stable_sigmoid(xv[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < xv.size(); ++i) values[i] = std::tanh(xv[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < xv.size(); ++i) values[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, kind]() mutable {
      auto dout = out_grad(out);
      auto y = out.values();
      auto gx = x.mutable_grad();
      switch (kind) {
        case Activation::Sigmoid:
          for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i] * y[i] * (T(1) - y[i]);
          break;
        case Activation::Tanh:
          for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i] * (T(1) - y[i] * y[i]);
          break;
        case Activation::Relu: {
          auto xv = x.values();
          for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += xv[i] > T(0) ? dout[i] : T(0);
          break;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  if (axis >= std::max<std::size_t>(x.rank(), 1)) {
    throw ArgumentError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  // groups of `len` elements separated by `stride`
  std::size_t groups, len, stride, step;
  if (x.rank() == 2 && axis == 0) {
    groups = x.cols(), len = x.rows(), stride = x.cols(), step = 1;
  } else {
    groups = x.rows(), len = x.cols(), stride = 1, step = x.cols();
  }
  const auto xv = x.values();
  std::vector<T> values(xv.size());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * step;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[base + i * stride]);
    T total = T(0);
    for (std::size_t i = 0; i < len; ++i) {
      const T e = std::exp(xv[base + i * stride] - mx);
      values[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) values[base + i * stride] /= total;
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, groups, len, stride, step]() mutable {
      auto dout = out_grad(out);
      auto y = out.values();
      auto gx = x.mutable_grad();
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t base = g * step;
        T dot = T(0);
        for (std::size_t i = 0; i < len; ++i) dot += y[base + i * stride] * dout[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t j = base + i * stride;
          gx[j] += y[j] * (dout[j] - dot);
        }
      }
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> group_softmax(Tape<T>& tape, const std::vector<Tensor<T>>& gates) {
  if (gates.empty()) throw ArgumentError("group_softmax: empty gate list");
  for (const auto& g : gates) require_same_shape(gates.front(), g, "group_softmax");
  const std::size_t k = gates.size(), n = gates.front().size();
  std::vector<std::vector<T>> values(k, std::vector<T>(n));
  std::vector<std::span<const T>> in(k);
  for (std::size_t j = 0; j < k; ++j) in[j] = gates[j].values();
  for (std::size_t i = 0; i < n; ++i) {
    T mx = in[0][i];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, in[j][i]);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      values[j][i] = std::exp(in[j][i] - mx);
      total += values[j][i];
    }
    for (std::size_t j = 0; j < k; ++j) values[j][i] /= total;
  }
  bool track = false;
  for (const auto& g : gates) track = track || tracks(tape, {&g});
  std::vector<Tensor<T>> outs;
  outs.reserve(k);
  for (std::size_t j = 0; j < k; ++j) outs.push_back(make_output<T>(gates[j].shape(), std::move(values[j]), track));
  if (track) {
    tape.record(outs, [gates, outs, k, n]() mutable {
      std::vector<std::span<const T>> dy(k), y(k);
      for (std::size_t j = 0; j < k; ++j) dy[j] = out_grad(outs[j]), y[j] = outs[j].values();
      std::vector<std::span<T>> gx(k);
      for (std::size_t j = 0; j < k; ++j) {
        if (gates[j].requires_grad()) gx[j] = gates[j].mutable_grad();
      }
      for (std::size_t i = 0; i < n; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) {
          if (!dy[j].empty()) dot += y[j][i] * dy[j][i];
        }
        for (std::size_t j = 0; j < k; ++j) {
          if (gx[j].empty()) continue;
          const T d = dy[j].empty() ? T(0) : dy[j][i];
          gx[j][i] += y[j][i] * (d - dot);
        }
      }
    });
  }
  return outs;
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const bool vectors = std::all_of(parts.begin(), parts.end(), [](const auto& p) { return p.rank() == 1; });
  bool track = false;
  for (const auto& p : parts) track = track || tracks(tape, {&p});

  if (vectors || axis == 1) {
    // column-wise: every part contributes a contiguous chunk of each row
    const std::size_t rows = parts.front().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
      if (p.rows() != rows || (!vectors && p.rank() != 2)) {
        throw DimensionError("concat: row count mismatch " + shape_string(parts.front().shape()) + " vs " +
                             shape_string(p.shape()));
      }
      widths.push_back(p.cols());
      total += p.cols();
    }
    std::vector<T> values(rows * total);
    std::size_t offset = 0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      auto pv = parts[j].values();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pv.data() + r * widths[j], widths[j], values.data() + r * total + offset);
      }
      offset += widths[j];
    }
    Shape shape = vectors ? Shape{total} : Shape{rows, total};
    auto out = make_output<T>(std::move(shape), std::move(values), track);
    if (track) {
      tape.record({out}, [parts, out, widths, rows, total]() mutable {
        auto dout = out_grad(out);
        std::size_t offset = 0;
        for (std::size_t j = 0; j < parts.size(); ++j) {
          if (parts[j].requires_grad()) {
            auto g = parts[j].mutable_grad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < widths[j]; ++c) g[r * widths[j] + c] += dout[r * total + offset + c];
            }
          }
          offset += widths[j];
        }
      });
    }
    return out;
  }
  if (axis != 0) throw ArgumentError("concat: axis " + std::to_string(axis) + " invalid");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.cols() != cols) {
      throw DimensionError("concat: column count mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<T> values;
  values.reserve(rows * cols);
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  auto out = make_output<T>(Shape{rows, cols}, std::move(values), track);
  if (track) {
    tape.record({out}, [parts, out]() mutable {
      auto dout = out_grad(out);
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += dout[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_defined(x, "slice_cols");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(x.shape()));
  }
  std::vector<T> values(rows * count);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * cols + begin, count, values.data() + r * count);
  const bool track = tracks(tape, {&x});
  Shape shape = x.rank() == 2 ? Shape{rows, count} : Shape{count};
  auto out = make_output<T>(std::move(shape), std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, rows, cols, begin, count]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) gx[r * cols + begin + c] += dout[r * count + c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t cols = x.cols();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(x.shape()));
  }
  auto xv = x.values();
  std::vector<T> values(xv.begin() + begin * cols, xv.begin() + (begin + count) * cols);
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{count, cols}, std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, begin, cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < dout.size(); ++i) gx[begin * cols + i] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(Tape<T>& tape, const Tensor<T>& x) {
  require_matrix(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> values(m * n);
  view(std::span<T>(values), n, m) = view(x.values(), m, n).transpose();
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{n, m}, std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, m, n]() mutable {
      view(x.mutable_grad(), m, n) += view(out_grad(out), n, m).transpose();
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), track);
  if (track) {
    tape.record({out}, [x, out]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& x, std::span<const std::ptrdiff_t> index) {
  require_matrix(x, "gather_rows");
  const std::size_t cols = x.cols(), rows = x.rows();
  std::vector<T> values(index.size() * cols, T(0));
  auto xv = x.values();
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] < 0) continue;
    require_index(static_cast<std::size_t>(index[j]) < rows, "gather_rows", index[j], rows);
    std::copy_n(xv.data() + index[j] * cols, cols, values.data() + j * cols);
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{index.size(), cols}, std::move(values), track);
  if (track) {
    std::vector<std::ptrdiff_t> idx(index.begin(), index.end());
    tape.record({out}, [x, out, idx = std::move(idx), cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0) continue;
        T* dst = gx.data() + idx[j] * cols;
        const T* src = dout.data() + j * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> merge_rows(Tape<T>& tape, const Tensor<T>& base, const Tensor<T>& update,
                     std::span<const std::size_t> index) {
  require_matrix(base, "merge_rows");
  require_matrix(update, "merge_rows");
  if (update.cols() != base.cols() || update.rows() != index.size()) {
    throw DimensionError("merge_rows: update " + shape_string(update.shape()) + " incompatible with base " +
                         shape_string(base.shape()));
  }
  const std::size_t cols = base.cols();
  std::vector<T> values(base.values().begin(), base.values().end());
  std::vector<std::uint8_t> replaced(base.rows(), 0);
  auto uv = update.values();
  for (std::size_t j = 0; j < index.size(); ++j) {
    require_index(index[j] < base.rows(), "merge_rows", index[j], base.rows());
    std::copy_n(uv.data() + j * cols, cols, values.data() + index[j] * cols);
    replaced[index[j]] = 1;
  }
  const bool track = tracks(tape, {&base, &update});
  auto out = make_output<T>(base.shape(), std::move(values), track);
  if (track) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    tape.record({out}, [base, update, out, idx = std::move(idx), replaced = std::move(replaced), cols]() mutable {
      auto dout = out_grad(out);
      if (base.requires_grad()) {
        auto gb = base.mutable_grad();
        for (std::size_t r = 0; r < replaced.size(); ++r) {
          if (replaced[r]) continue;
          for (std::size_t c = 0; c < cols; ++c) gb[r * cols + c] += dout[r * cols + c];
        }
      }
      if (update.requires_grad()) {
        auto gu = update.mutable_grad();
        for (std::size_t j = 0; j < idx.size(); ++j) {
          for (std::size_t c = 0; c < cols; ++c) gu[j * cols + c] += dout[idx[j] * cols + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> select_rows(Tape<T>& tape, std::span<const std::uint8_t> mask, const Tensor<T>& when_true,
                      const Tensor<T>& when_false) {
  require_same_shape(when_true, when_false, "select_rows");
  if (mask.size() != when_true.rows()) {
    throw DimensionError("select_rows: mask of " + std::to_string(mask.size()) + " rows for " +
                         shape_string(when_true.shape()));
  }
  const std::size_t cols = when_true.cols();
  std::vector<T> values(when_true.size());
  auto tv = when_true.values(), fv = when_false.values();
  for (std::size_t r = 0; r < mask.size(); ++r) {
    const T* src = (mask[r] ? tv.data() : fv.data()) + r * cols;
    std::copy_n(src, cols, values.data() + r * cols);
  }
  const bool track = tracks(tape, {&when_true, &when_false});
  auto out = make_output<T>(when_true.shape(), std::move(values), track);
  if (track) {
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record({out}, [when_true, when_false, out, m = std::move(m), cols]() mutable {
      auto dout = out_grad(out);
      for (int side = 0; side < 2; ++side) {
        auto& target = side == 0 ? when_true : when_false;
        if (!target.requires_grad()) continue;
        auto g = target.mutable_grad();
        for (std::size_t r = 0; r < m.size(); ++r) {
          if ((m[r] != 0) != (side == 0)) continue;
          for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += dout[r * cols + c];
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
std::vector<std::size_t> selected_rows(const Tensor<T>& x, std::span<const std::uint8_t> mask, const char* op) {
  require_matrix(x, op);
  if (!mask.empty() && mask.size() != x.rows()) {
    throw DimensionError(std::string(op) + ": mask of " + std::to_string(mask.size()) + " rows for " +
                         shape_string(x.shape()));
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (mask.empty() || mask[r]) rows.push_back(r);
  }
  if (rows.empty()) throw ArgumentError(std::string(op) + ": no unmasked positions");
  return rows;
}

}  // namespace

template <typename T>
Tensor<T> max_pool(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  const auto rows = selected_rows(x, mask, "max_pool");
  const std::size_t cols = x.cols();
  auto xv = x.values();
  std::vector<T> values(cols);
  std::vector<std::size_t> arg(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t best = rows.front();
    for (auto r : rows) {
      if (xv[r * cols + c] > xv[best * cols + c]) best = r;
    }
    arg[c] = best;
    values[c] = xv[best * cols + c];
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{cols}, std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, arg = std::move(arg), cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t c = 0; c < cols; ++c) gx[arg[c] * cols + c] += dout[c];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_pool(Tape<T>& tape, const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  auto rows = selected_rows(x, mask, "mean_pool");
  const std::size_t cols = x.cols();
  auto xv = x.values();
  std::vector<T> values(cols, T(0));
  for (auto r : rows) {
    for (std::size_t c = 0; c < cols; ++c) values[c] += xv[r * cols + c];
  }
  const T inv = T(1) / static_cast<T>(rows.size());
  for (auto& v : values) v *= inv;
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{cols}, std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, rows = std::move(rows), cols, inv]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (auto r : rows) {
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += dout[c] * inv;
      }
    });
  }
  return out;
}

namespace {

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows, const char* op) {
  if (offsets.size() < 2 || offsets.back() != rows) {
    throw DimensionError(std::string(op) + ": offsets do not cover " + std::to_string(rows) + " rows");
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s] >= offsets[s + 1]) throw ArgumentError(std::string(op) + ": empty segment");
  }
}

}  // namespace

template <typename T>
Tensor<T> segment_max(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> offsets) {
  require_matrix(x, "segment_max");
  check_offsets(offsets, x.rows(), "segment_max");
  const std::size_t segs = offsets.size() - 1, cols = x.cols();
  auto xv = x.values();
  std::vector<T> values(segs * cols);
  std::vector<std::size_t> arg(segs * cols);
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (xv[r * cols + c] > xv[best * cols + c]) best = r;
      }
      arg[s * cols + c] = best;
      values[s * cols + c] = xv[best * cols + c];
    }
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{segs, cols}, std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, arg = std::move(arg), cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i] * cols + i % cols] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> segment_mean(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> offsets) {
  require_matrix(x, "segment_mean");
  check_offsets(offsets, x.rows(), "segment_mean");
  const std::size_t segs = offsets.size() - 1, cols = x.cols();
  auto xv = x.values();
  std::vector<T> values(segs * cols, T(0));
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t c = 0; c < cols; ++c) values[s * cols + c] += xv[r * cols + c];
    }
    const T inv = T(1) / static_cast<T>(offsets[s + 1] - offsets[s]);
    for (std::size_t c = 0; c < cols; ++c) values[s * cols + c] *= inv;
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{segs, cols}, std::move(values), track);
  if (track) {
    std::vector<std::size_t> off(offsets.begin(), offsets.end());
    tape.record({out}, [x, out, off = std::move(off), cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        const T inv = T(1) / static_cast<T>(off[s + 1] - off[s]);
        for (std::size_t r = off[s]; r < off[s + 1]; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += dout[s * cols + c] * inv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> segment_sum(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> segment_of_row,
                      std::size_t segments) {
  require_matrix(x, "segment_sum");
  if (segment_of_row.size() != x.rows()) throw DimensionError("segment_sum: segment ids do not match rows");
  const std::size_t cols = x.cols();
  auto xv = x.values();
  std::vector<T> values(segments * cols, T(0));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    require_index(segment_of_row[r] < segments, "segment_sum", segment_of_row[r], segments);
    for (std::size_t c = 0; c < cols; ++c) values[segment_of_row[r] * cols + c] += xv[r * cols + c];
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(Shape{segments, cols}, std::move(values), track);
  if (track) {
    std::vector<std::size_t> seg(segment_of_row.begin(), segment_of_row.end());
    tape.record({out}, [x, out, seg = std::move(seg), cols]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < seg.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += dout[seg[r] * cols + c];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> segment_softmax(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> segment_of_row,
                          std::size_t segments) {
  require_matrix(x, "segment_softmax");
  if (segment_of_row.size() != x.rows()) throw DimensionError("segment_softmax: segment ids do not match rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  auto xv = x.values();
  std::vector<T> mx(segments * cols, -std::numeric_limits<T>::infinity());
  std::vector<T> total(segments * cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = segment_of_row[r];
    require_index(s < segments, "segment_softmax", s, segments);
    for (std::size_t c = 0; c < cols; ++c) mx[s * cols + c] = std::max(mx[s * cols + c], xv[r * cols + c]);
  }
  std::vector<T> values(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = segment_of_row[r];
    for (std::size_t c = 0; c < cols; ++c) {
      values[r * cols + c] = std::exp(xv[r * cols + c] - mx[s * cols + c]);
      total[s * cols + c] += values[r * cols + c];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = segment_of_row[r];
    for (std::size_t c = 0; c < cols; ++c) values[r * cols + c] /= total[s * cols + c];
  }
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    std::vector<std::size_t> seg(segment_of_row.begin(), segment_of_row.end());
    tape.record({out}, [x, out, seg = std::move(seg), segments, cols]() mutable {
      auto dout = out_grad(out);
      auto y = out.values();
      auto gx = x.mutable_grad();
      std::vector<T> dot(segments * cols, T(0));
      for (std::size_t r = 0; r < seg.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) dot[seg[r] * cols + c] += y[r * cols + c] * dout[r * cols + c];
      }
      for (std::size_t r = 0; r < seg.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          gx[i] += y[i] * (dout[i] - dot[seg[r] * cols + c]);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, Rng& rng, bool training) {
  require_defined(x, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? keep_scale : T(0);
  auto xv = x.values();
  std::vector<T> values(x.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = xv[i] * mask[i];
  const bool track = tracks(tape, {&x});
  auto out = make_output<T>(x.shape(), std::move(values), track);
  if (track) {
    tape.record({out}, [x, out, mask = std::move(mask)]() mutable {
      auto dout = out_grad(out);
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < dout.size(); ++i) gx[i] += dout[i] * mask[i];
    });
  }
  return out;
}

namespace {

template <typename T>
void check_targets(const Tensor<T>& x, std::span<const std::size_t> gold, double smoothing, const char* op) {
  require_defined(x, op);
  if (x.rows() != gold.size()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(gold.size()) + " labels for " +
                         shape_string(x.shape()));
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw ArgumentError(std::string(op) + ": smoothing must lie in [0, 1), got " + std::to_string(smoothing));
  }
  for (auto g : gold) {
    if (g >= x.cols()) {
      throw ArgumentError(std::string(op) + ": gold label " + std::to_string(g) + " out of range for " +
                          std::to_string(x.cols()) + " labels");
    }
  }
}

template <typename T>
T target_weight(std::size_t k, std::size_t gold, std::size_t labels, double smoothing) {
  const double base = smoothing / static_cast<double>(labels);
  return static_cast<T>(k == gold ? 1.0 - smoothing + base : base);
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& probs, std::span<const std::size_t> gold, double smoothing) {
  check_targets(probs, gold, smoothing, "cross_entropy");
  constexpr T floor = T(1e-12);
  const std::size_t rows = probs.rows(), k = probs.cols();
  auto pv = probs.values();
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const T t = target_weight<T>(c, gold[r], k, smoothing);
      if (t != T(0)) loss -= t * std::log(std::max(pv[r * k + c], floor));
    }
  }
  loss /= static_cast<T>(rows);
  const bool track = tracks(tape, {&probs});
  auto out = make_output<T>(Shape{}, std::vector<T>{loss}, track);
  if (track) {
    std::vector<std::size_t> g(gold.begin(), gold.end());
    tape.record({out}, [probs, out, g = std::move(g), smoothing, rows, k]() mutable {
      const T d = out_grad(out)[0] / static_cast<T>(rows);
      auto pv = probs.values();
      auto gp = probs.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
          const T p = pv[r * k + c];
          if (p > floor) gp[r * k + c] -= d * target_weight<T>(c, g[r], k, smoothing) / p;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::size_t> gold,
                                double smoothing) {
  check_targets(logits, gold, smoothing, "softmax_cross_entropy");
  const std::size_t rows = logits.rows(), k = logits.cols();
  auto lv = logits.values();
  std::vector<T> probs(rows * k);
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* l = lv.data() + r * k;
    const T mx = *std::max_element(l, l + k);
    T total = T(0);
    for (std::size_t c = 0; c < k; ++c) total += std::exp(l[c] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t c = 0; c < k; ++c) {
      probs[r * k + c] = std::exp(l[c] - lse);
      loss -= target_weight<T>(c, gold[r], k, smoothing) * (l[c] - lse);
    }
  }
  loss /= static_cast<T>(rows);
  const bool track = tracks(tape, {&logits});
  auto out = make_output<T>(Shape{}, std::vector<T>{loss}, track);
  if (track) {
    std::vector<std::size_t> g(gold.begin(), gold.end());
    tape.record({out}, [logits, out, probs = std::move(probs), g = std::move(g), smoothing, rows, k]() mutable {
      const T d = out_grad(out)[0] / static_cast<T>(rows);
      auto gl = logits.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
          gl[r * k + c] += d * (probs[r * k + c] - target_weight<T>(c, g[r], k, smoothing));
        }
      }
    });
  }
  return out;
}

#define ADASLSTM_INSTANTIATE_OPS(T)                                                                              \
  template void check_finite(const Tensor<T>&, const char*);                                                    \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add_bias(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                                      \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                           \
  template Tensor<T> activation(Tape<T>&, const Tensor<T>&, Activation);                                        \
  template Tensor<T> softmax(Tape<T>&, const Tensor<T>&, std::size_t);                                          \
  template std::vector<Tensor<T>> group_softmax(Tape<T>&, const std::vector<Tensor<T>>&);                       \
  template Tensor<T> concat(Tape<T>&, const std::vector<Tensor<T>>&, std::size_t);                              \
  template Tensor<T> slice_cols(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> slice_rows(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> transpose(Tape<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                                \
  template Tensor<T> gather_rows(Tape<T>&, const Tensor<T>&, std::span<const std::ptrdiff_t>);                  \
  template Tensor<T> merge_rows(Tape<T>&, const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>);    \
  template Tensor<T> select_rows(Tape<T>&, std::span<const std::uint8_t>, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> max_pool(Tape<T>&, const Tensor<T>&, std::span<const std::uint8_t>);                       \
  template Tensor<T> mean_pool(Tape<T>&, const Tensor<T>&, std::span<const std::uint8_t>);                      \
  template Tensor<T> segment_max(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);                     \
  template Tensor<T> segment_mean(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>);                    \
  template Tensor<T> segment_sum(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, std::size_t);        \
  template Tensor<T> segment_softmax(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, std::size_t);    \
  template Tensor<T> dropout(Tape<T>&, const Tensor<T>&, double, Rng&, bool);                                   \
  template Tensor<T> cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, double);           \
  template Tensor<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, double);

ADASLSTM_INSTANTIATE_OPS(float)
ADASLSTM_INSTANTIATE_OPS(double)

}  // namespace adaslstm
