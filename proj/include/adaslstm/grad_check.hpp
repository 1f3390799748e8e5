#pragma once

#include <functional>
#include <vector>

#include "adaslstm/tensor.hpp"

namespace adaslstm {

/// Scalar-valued function of tensors recorded on the given tape.
using ScalarFunction = std::function<Tensor<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `f` with respect to each of `inputs`
/// against central differences (f(x+eps) - f(x-eps)) / (2 eps).
///
/// Returns the largest relative error |a - n| / max(|a|, |n|, floor) over all
/// input coordinates. The floor keeps coordinates whose true gradient is zero
/// from dividing roundoff by roundoff. The inputs' gradient slots are zeroed
/// before and left holding the analytic gradient afterwards.
double grad_check(const ScalarFunction& f, std::vector<Tensor<double>> inputs, double eps = 1e-6,
                  double floor = 1e-3);

}  // namespace adaslstm
