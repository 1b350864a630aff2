#include "ltp/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ltp/common.hpp"

namespace ltp::nn {

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params, std::size_t samples,
                           std::uint64_t seed, double h) {
  if (params.empty()) throw UsageError("grad_check: no parameters");
  std::vector<std::pair<std::string, Tensor>> ps = params;
  for (auto& [name, t] : ps) t.zero_grad();
  Tensor base = loss_fn();
  // Central differences carry roundoff near eps * |f| / h, so a structurally
  // zero gradient cannot be resolved below a floor that scales with |f|.
  const double floor = 1e-6 * std::max(1.0, std::fabs(base.item()));
  base.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : ps) analytic.push_back(t.grad());

  std::size_t total = 0;
  for (const auto& [name, t] : ps) total += t.size();

  Rng rng = make_rng(seed, 0x6C);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  GradCheckResult res;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = pick(rng);
    std::size_t which = 0;
    while (flat >= ps[which].second.size()) flat -= ps[which++].second.size();
    auto values = ps[which].second.mutable_value();
    const double orig = values[flat];
    values[flat] = orig + h;
    const double up = loss_fn().item();
    values[flat] = orig - h;
    const double down = loss_fn().item();
    values[flat] = orig;

    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[which][flat];
    const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
    ++res.coordinates;
    if (rel > res.max_rel_error || res.worst.empty()) {
      res.max_rel_error = std::max(res.max_rel_error, rel);
      if (rel >= res.max_rel_error) res.worst = ps[which].first + "[" + std::to_string(flat) + "]";
    }
  }
  for (auto& [name, t] : ps) t.zero_grad();
  return res;
}

}  // namespace ltp::nn
