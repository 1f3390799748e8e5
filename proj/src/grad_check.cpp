#include "adaslstm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "adaslstm/errors.hpp"

namespace adaslstm {

double grad_check(const ScalarFunction& f, std::vector<Tensor<double>> inputs, double eps, double floor) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw ArgumentError("grad_check: every input must require a gradient");
    x.mutable_grad();
    x.zero_grad();
  }
  {
    Tape<double> tape;
    tape.backward(f(tape));
  }

  double worst = 0.0;
  for (auto& x : inputs) {
    auto values = x.mutable_values();
    auto analytic = x.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      Tape<double> off(false);
      values[i] = saved + eps;
      const double up = f(off).item();
      values[i] = saved - eps;
      const double down = f(off).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace adaslstm
