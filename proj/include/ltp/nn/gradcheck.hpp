#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ltp/nn/tensor.hpp"

namespace ltp::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "name[index]" of the worst coordinate
};

// Compares reverse-mode gradients of `loss_fn` against central differences
//   (f(x + h) - f(x - h)) / 2h
// on `samples` coordinates drawn uniformly from `params`. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6 * max(1, |f|)).
// `loss_fn` must rebuild the graph from the current parameter values.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params, std::size_t samples,
                           std::uint64_t seed, double h = 1e-5);

}  // namespace ltp::nn
