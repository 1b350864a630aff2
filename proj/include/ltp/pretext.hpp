#pragma once

#include <optional>
#include <vector>

#include "json.hpp"
#include "ltp/common.hpp"
#include "ltp/nn/layers.hpp"
#include "ltp/nn/tensor.hpp"
#include "ltp/synthesis.hpp"

namespace ltp::pretext {

using synthesis::ActionInstance;
using synthesis::ScaleBucket;

struct OrdinalRange {
  int first = 1;  // 1-based, inclusive
  int last = 1;
  bool operator==(const OrdinalRange&) const = default;
};

// Basic task (target category) plus optional ordinal / scale restrictions.
struct Condition {
  int target_category = 0;
  std::optional<OrdinalRange> ordinal;
  std::optional<ScaleBucket> scale;

  bool conditioned() const { return ordinal.has_value() || scale.has_value(); }
  bool operator==(const Condition&) const = default;
};

// z_b (one-hot over N_target), z_o (indicator + first-ordinal block + last-ordinal
// block, 2 N_max + 1 channels) and z_s (indicator + XS/S/L/XL, 5 channels).
struct ConditionVector {
  std::vector<double> basic;
  std::vector<double> ordinal;
  std::vector<double> scale;

  std::vector<double> concatenated() const;
  bool operator==(const ConditionVector&) const = default;
};

inline int condition_width(int num_targets, int max_instances) { return num_targets + 2 * max_instances + 1 + 5; }

std::vector<double> encode_basic(int category, int num_targets);
std::vector<double> encode_ordinal(std::optional<OrdinalRange> range, int max_instances);
std::vector<double> encode_scale(std::optional<ScaleBucket> bucket);
ConditionVector encode_condition(const Condition& c, int num_targets, int max_instances);

// Inverse of encode_condition; throws DomainError when a block violates its
// indicator layout.
Condition decode_condition(const ConditionVector& v, int max_instances);
bool valid_condition_vector(const ConditionVector& v, int max_instances);

struct ConditionSampling {
  double p_cond = 0.5;
  bool allow_joint = false;  // permit ordinal and scale together
};

// With probability 1 - p_cond the basic task alone; otherwise an ordinal or a
// scale condition (or both, when allow_joint) chosen uniformly. Ordinal ranges
// live within the realized instance count; the scale bucket is that of one
// uniformly chosen instance so the filtered set is never empty.
Condition sample_condition(const synthesis::SynthesizedSample& sample, const ConditionSampling& cfg, Rng& rng);

// Instances satisfying every active restriction, in input order.
std::vector<ActionInstance> filter_targets(const std::vector<ActionInstance>& instances, const Condition& c);

// q' = q + E(z) broadcast over all query rows.
nn::Tensor condition_queries(const nn::Tensor& queries, const ConditionVector& cv, const nn::TaskEncoder& encoder);

// labels.jsonl record: {"ordinal": [o1, o2] | null, "scale": "XS|S|L|XL" | null}
nlohmann::json condition_to_json(const Condition& c);
Condition condition_from_json(const nlohmann::json& j, int target_category);

}  // namespace ltp::pretext
