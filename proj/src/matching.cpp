#include "ltp/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltp::matching {

using nn::Tensor;

void MatchCostConfig::validate() const {
  if (cls < 0 || l1 < 0 || iou < 0) throw ConfigError("match cost weights must be nonnegative");
  if (cls == 0 && l1 == 0 && iou == 0) throw ConfigError("match cost weights are all zero");
}

double interval_iou(const Interval& a, const Interval& b) {
  const double inter = std::min(a.end(), b.end()) - std::max(a.start(), b.start());
  if (inter <= 0.0) return 0.0;
  // Overlapping, so the union is the hull; exact 1 for identical intervals.
  const double uni = std::max(a.end(), b.end()) - std::min(a.start(), b.start());
  return uni > 0.0 ? inter / uni : 0.0;
}

double reg_loss(const Interval& t, const Interval& t_hat, const MatchCostConfig& cfg) {
  const double l1 = std::fabs(t.center - t_hat.center) + std::fabs(t.width - t_hat.width);
  return cfg.l1 * l1 + cfg.iou * (1.0 - interval_iou(t, t_hat));
}

double match_cost(const Target& gt, const Prediction& pred, const MatchCostConfig& cfg) {
  const double p = pred.probs.at(static_cast<std::size_t>(gt.label));
  return -cfg.cls * p + reg_loss(gt.interval, pred.interval, cfg);
}

MatrixD cost_matrix(const std::vector<Target>& gts, const std::vector<Prediction>& preds,
                    const MatchCostConfig& cfg) {
  MatrixD c(gts.size(), preds.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) c(i, j) = match_cost(gts[i], preds[j], cfg);
  }
  return c;
}

namespace {

// Shortest augmenting path with potentials, O(n^2 m). `rows`/`cols` select a
// sub-problem of `cost`; returns the column position for each selected row.
std::vector<int> solve(const MatrixD& cost, const std::vector<int>& rows, const std::vector<int>& cols) {
  const std::size_t n = rows.size();
  const std::size_t m = cols.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<std::size_t>(rows[i0 - 1]), static_cast<std::size_t>(cols[j - 1])) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

double sub_cost(const MatrixD& cost, const std::vector<int>& rows, const std::vector<int>& cols,
                const std::vector<int>& local) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s += cost(static_cast<std::size_t>(rows[i]), static_cast<std::size_t>(cols[static_cast<std::size_t>(local[i])]));
  }
  return s;
}

}  // namespace

double assignment_cost(const MatrixD& cost, const Assignment& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += cost(i, static_cast<std::size_t>(a[i]));
  return s;
}

Assignment hungarian(const MatrixD& cost) {
  const std::size_t n = cost.rows;
  const std::size_t m = cost.cols;
  if (n > m) {
    throw ShapeError("hungarian: " + std::to_string(n) + " rows exceed " + std::to_string(m) + " columns");
  }
  for (double c : cost.data) {
    if (!std::isfinite(c)) throw DomainError("hungarian: non-finite cost");
  }
  if (n == 0) return {};

  std::vector<int> all_rows(n), all_cols(m);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = static_cast<int>(i);
  for (std::size_t j = 0; j < m; ++j) all_cols[j] = static_cast<int>(j);
  Assignment best(n);
  {
    const auto local = solve(cost, all_rows, all_cols);
    for (std::size_t i = 0; i < n; ++i) best[i] = all_cols[static_cast<std::size_t>(local[i])];
  }
  const double optimum = assignment_cost(cost, best);
  double scale = 1.0;
  for (double c : cost.data) scale = std::max(scale, std::fabs(c));
  const double tol = 1e-12 * scale * static_cast<double>(n);

  // Lexicographic tie-break: fix rows in order, each to the smallest column
  // that still admits an optimal completion.
  Assignment result(n, -1);
  std::vector<char> taken(m, 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> rest_rows(all_rows.begin() + static_cast<std::ptrdiff_t>(i) + 1, all_rows.end());
    for (std::size_t j = 0; j < m; ++j) {
      if (taken[j]) continue;
      if (static_cast<int>(j) == best[i]) {
        // The current optimal completion already uses j; no need to re-solve.
        result[i] = best[i];
        break;
      }
      std::vector<int> rest_cols;
      for (std::size_t k = 0; k < m; ++k) {
        if (!taken[k] && k != j) rest_cols.push_back(static_cast<int>(k));
      }
      const auto local = solve(cost, rest_rows, rest_cols);
      const double total = fixed + cost(i, j) + sub_cost(cost, rest_rows, rest_cols, local);
      if (total <= optimum + tol) {
        result[i] = static_cast<int>(j);
        for (std::size_t r = 0; r < rest_rows.size(); ++r) {
          best[i + 1 + r] = rest_cols[static_cast<std::size_t>(local[r])];
        }
        break;
      }
    }
    taken[static_cast<std::size_t>(result[i])] = 1;
    fixed += cost(i, static_cast<std::size_t>(result[i]));
  }
  return result;
}

std::vector<Prediction> to_predictions(const nn::DetectionSet& set) {
  std::vector<Prediction> out(set.size());
  const std::size_t k = set.class_probs.cols();
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].probs.assign(set.class_probs.value().begin() + static_cast<std::ptrdiff_t>(j * k),
                        set.class_probs.value().begin() + static_cast<std::ptrdiff_t>((j + 1) * k));
    out[j].interval = {set.boxes.at(j, 0), set.boxes.at(j, 1)};
  }
  return out;
}

Assignment match(const std::vector<Target>& gts, const nn::DetectionSet& set, const MatchCostConfig& cfg) {
  return hungarian(cost_matrix(gts, to_predictions(set), cfg));
}

Tensor reg_loss(const Interval& t, const Tensor& box_row, const MatchCostConfig& cfg) {
  if (box_row.rows() != 1 || box_row.cols() != 2) throw ShapeError("reg_loss expects a 1x2 box row");
  auto scalar = [](double x) { return Tensor::constant(1, 1, {x}); };
  const Tensor c = nn::element(box_row, 0, 0);
  const Tensor w = nn::element(box_row, 0, 1);
  const Tensor l1 = nn::abs(nn::add_scalar(c, -t.center)) + nn::abs(nn::add_scalar(w, -t.width));

  const Tensor half_w = nn::scale(w, 0.5);
  const Tensor s = c - half_w;
  const Tensor e = c + half_w;
  const Tensor inter = nn::relu(nn::minimum(e, scalar(t.end())) - nn::maximum(s, scalar(t.start())));
  const Tensor uni = nn::add_scalar(w, t.width) - inter;
  const Tensor iou = inter / uni;
  return nn::scale(l1, cfg.l1) + nn::scale(nn::add_scalar(nn::scale(iou, -1.0), 1.0), cfg.iou);
}

namespace {

// Rows of `m` selected by `idx` gathered into a |idx| x cols tensor; done
// through one-hot matmul so gradients flow back to `m`.
Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  std::vector<double> sel(idx.size() * m.rows(), 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) sel[r * m.rows() + idx[r]] = 1.0;
  return nn::matmul(Tensor::constant(idx.size(), m.rows(), std::move(sel)), m);
}

}  // namespace

Tensor detr_loss(const std::vector<Target>& gts, const nn::DetectionSet& set, const Assignment& assignment,
                 const LossConfig& cfg) {
  if (assignment.size() != gts.size()) throw ShapeError("assignment does not cover every ground truth");
  const std::size_t q = set.size();
  const std::size_t bg = set.num_classes();
  constexpr double kFloor = 1e-12;

  // Weighted one-hot selection of the log-probabilities that enter the loss.
  std::vector<double> weights(q * (bg + 1), 0.0);
  std::vector<char> matched(q, 0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto j = static_cast<std::size_t>(assignment[i]);
    if (j >= q || matched[j]) throw ShapeError("assignment is not an injection into the queries");
    if (gts[i].label < 0 || static_cast<std::size_t>(gts[i].label) >= bg) throw DomainError("target label out of range");
    matched[j] = 1;
    weights[j * (bg + 1) + static_cast<std::size_t>(gts[i].label)] = 1.0;
  }
  for (std::size_t j = 0; j < q; ++j) {
    if (!matched[j]) weights[j * (bg + 1) + bg] = cfg.background_weight;
  }
  const Tensor logp = nn::log_floor(set.class_probs, kFloor);
  Tensor total = nn::scale(nn::sum(logp * Tensor::constant(q, bg + 1, std::move(weights))), -1.0);

  if (!gts.empty()) {
    std::vector<std::size_t> idx;
    for (int j : assignment) idx.push_back(static_cast<std::size_t>(j));
    const Tensor boxes = gather_rows(set.boxes, idx);
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      terms.push_back(reg_loss(gts[i].interval, gather_rows(boxes, {i}), cfg.weights));
    }
    total = total + nn::add_all(terms);
  }
  return total;
}

std::vector<Target> binary_relabel(std::vector<Target> gts) {
  for (auto& g : gts) g.label = 0;
  return gts;
}

}  // namespace ltp::matching
