#pragma once

#include <vector>

#include "ltp/common.hpp"
#include "ltp/nn/model.hpp"
#include "ltp/nn/tensor.hpp"

namespace ltp::matching {

// Normalized interval in (center, width) form; the box head's parameterization.
struct Interval {
  double center = 0.0;
  double width = 0.0;

  double start() const { return center - 0.5 * width; }
  double end() const { return center + 0.5 * width; }
  static Interval from_bounds(double start, double end) { return {0.5 * (start + end), end - start}; }
  bool operator==(const Interval&) const = default;
};

struct Target {
  int label = 0;  // foreground class id in [0, num_classes)
  Interval interval;
  bool operator==(const Target&) const = default;
};

// Plain-value view of one query's output.
struct Prediction {
  std::vector<double> probs;  // num_classes + 1, background last
  Interval interval;
};

struct MatchCostConfig {
  double cls = 2.0;
  double l1 = 5.0;
  double iou = 2.0;

  void validate() const;
  bool operator==(const MatchCostConfig&) const = default;
};

// assignment[i] = prediction matched to ground truth i.
using Assignment = std::vector<int>;

// tIoU of two (center, width) intervals; 0 when disjoint or touching.
double interval_iou(const Interval& a, const Interval& b);

// -cls * p(c) + l1 * |t - t'|_1 + iou * (1 - tIoU)
double match_cost(const Target& gt, const Prediction& pred, const MatchCostConfig& cfg);
MatrixD cost_matrix(const std::vector<Target>& gts, const std::vector<Prediction>& preds,
                    const MatchCostConfig& cfg);

// Minimum-cost injective assignment of the n rows onto the m >= n columns.
// Among optimal assignments the lexicographically smallest is returned.
Assignment hungarian(const MatrixD& cost);
double assignment_cost(const MatrixD& cost, const Assignment& a);

std::vector<Prediction> to_predictions(const nn::DetectionSet& set);
Assignment match(const std::vector<Target>& gts, const nn::DetectionSet& set, const MatchCostConfig& cfg);

// l1 * |t - t'|_1 + iou * (1 - tIoU). The tensor form differentiates through
// a 1x2 box row; the overlap term has zero gradient when the intervals do not
// overlap.
double reg_loss(const Interval& t, const Interval& t_hat, const MatchCostConfig& cfg);
nn::Tensor reg_loss(const Interval& t, const nn::Tensor& box_row, const MatchCostConfig& cfg);

struct LossConfig {
  MatchCostConfig weights;
  double background_weight = 1.0;  // multiplies -log p(background) of unmatched queries
  bool aux_layers = false;         // also supervise every intermediate decoder layer
  bool operator==(const LossConfig&) const = default;
};

// Set-prediction loss:
//   sum_i -log p_{a(i)}(c_i) + w_bg * sum_{unmatched j} -log p_j(bg)
//     + sum_i reg_loss(t_i, t_{a(i)})
// with log arguments floored at 1e-12.
nn::Tensor detr_loss(const std::vector<Target>& gts, const nn::DetectionSet& set, const Assignment& assignment,
                     const LossConfig& cfg);

// Class-agnostic targets for pre-training: every instance becomes class 0.
std::vector<Target> binary_relabel(std::vector<Target> gts);

}  // namespace ltp::matching
