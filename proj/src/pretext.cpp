#include "ltp/pretext.hpp"

#include <algorithm>

namespace ltp::pretext {

std::vector<double> ConditionVector::concatenated() const {
  std::vector<double> out;
  out.reserve(basic.size() + ordinal.size() + scale.size());
  out.insert(out.end(), basic.begin(), basic.end());
  out.insert(out.end(), ordinal.begin(), ordinal.end());
  out.insert(out.end(), scale.begin(), scale.end());
  return out;
}

std::vector<double> encode_basic(int category, int num_targets) {
  if (num_targets < 1 || category < 0 || category >= num_targets) {
    throw DomainError("target category " + std::to_string(category) + " outside [0, " +
                      std::to_string(num_targets) + ")");
  }
  std::vector<double> z(static_cast<std::size_t>(num_targets), 0.0);
  z[static_cast<std::size_t>(category)] = 1.0;
  return z;
}

std::vector<double> encode_ordinal(std::optional<OrdinalRange> range, int max_instances) {
  if (max_instances < 1) throw DomainError("N_max must be positive");
  std::vector<double> z(static_cast<std::size_t>(2 * max_instances + 1), 0.0);
  if (!range) return z;
  if (range->first < 1 || range->last < range->first || range->last > max_instances) {
    throw DomainError("ordinal range [" + std::to_string(range->first) + ", " + std::to_string(range->last) +
                      "] invalid for N_max " + std::to_string(max_instances));
  }
  z[0] = 1.0;
  z[static_cast<std::size_t>(range->first)] = 1.0;
  z[static_cast<std::size_t>(max_instances + range->last)] = 1.0;
  return z;
}

std::vector<double> encode_scale(std::optional<ScaleBucket> bucket) {
  std::vector<double> z(5, 0.0);
  if (!bucket) return z;
  z[0] = 1.0;
  z[1 + static_cast<std::size_t>(*bucket)] = 1.0;
  return z;
}

ConditionVector encode_condition(const Condition& c, int num_targets, int max_instances) {
  return {encode_basic(c.target_category, num_targets), encode_ordinal(c.ordinal, max_instances),
          encode_scale(c.scale)};
}

namespace {

// Index of the single 1 in v[lo, hi), or -1 if the block is not one-hot.
int one_hot_index(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  int idx = -1;
  for (std::size_t i = lo; i < hi; ++i) {
    if (v[i] == 1.0) {
      if (idx >= 0) return -1;
      idx = static_cast<int>(i);
    } else if (v[i] != 0.0) {
      return -1;
    }
  }
  return idx;
}

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

Condition decode_condition(const ConditionVector& v, int max_instances) {
  const auto nm = static_cast<std::size_t>(max_instances);
  if (v.ordinal.size() != 2 * nm + 1 || v.scale.size() != 5) throw DomainError("condition vector has wrong widths");
  Condition c;
  c.target_category = one_hot_index(v.basic, 0, v.basic.size());
  if (c.target_category < 0) throw DomainError("basic block is not one-hot");

  if (v.ordinal[0] == 1.0) {
    const int first = one_hot_index(v.ordinal, 1, nm + 1);
    const int last = one_hot_index(v.ordinal, nm + 1, 2 * nm + 1);
    if (first < 0 || last < 0) throw DomainError("ordinal block lacks exactly one start and one end");
    c.ordinal = OrdinalRange{first, last - max_instances};
    if (c.ordinal->last < c.ordinal->first) throw DomainError("ordinal range ends before it starts");
  } else if (!all_zero(v.ordinal)) {
    throw DomainError("ordinal indicator off but channels set");
  }

  if (v.scale[0] == 1.0) {
    const int b = one_hot_index(v.scale, 1, 5);
    if (b < 0) throw DomainError("scale block lacks exactly one bucket");
    c.scale = static_cast<ScaleBucket>(b - 1);
  } else if (!all_zero(v.scale)) {
    throw DomainError("scale indicator off but channels set");
  }
  return c;
}

bool valid_condition_vector(const ConditionVector& v, int max_instances) {
  try {
    decode_condition(v, max_instances);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

Condition sample_condition(const synthesis::SynthesizedSample& sample, const ConditionSampling& cfg, Rng& rng) {
  if (sample.instances.empty()) throw DomainError("cannot condition a sample without instances");
  Condition c;
  c.target_category = sample.target_category;
  std::bernoulli_distribution enable(std::clamp(cfg.p_cond, 0.0, 1.0));
  if (!enable(rng)) return c;

  const int n = static_cast<int>(sample.instances.size());
  const int kind = uniform_int(rng, 0, cfg.allow_joint ? 2 : 1);  // 0 ordinal, 1 scale, 2 both
  if (kind == 0 || kind == 2) {
    const int first = uniform_int(rng, 1, n);
    const int length = uniform_int(rng, 1, n - first + 1);
    c.ordinal = OrdinalRange{first, first + length - 1};
  }
  if (kind == 1 || kind == 2) {
    // Pick among instances that survive the ordinal filter, if any.
    const int lo = c.ordinal ? c.ordinal->first : 1;
    const int hi = c.ordinal ? c.ordinal->last : n;
    const int pick = uniform_int(rng, lo, hi);
    c.scale = synthesis::assign_scale_bucket(sample.instances[static_cast<std::size_t>(pick - 1)].r);
  }
  return c;
}

std::vector<ActionInstance> filter_targets(const std::vector<ActionInstance>& instances, const Condition& c) {
  std::vector<ActionInstance> out;
  for (const auto& inst : instances) {
    if (c.ordinal && (inst.ordinal < c.ordinal->first || inst.ordinal > c.ordinal->last)) continue;
    if (c.scale && synthesis::assign_scale_bucket(inst.r) != *c.scale) continue;
    out.push_back(inst);
  }
  return out;
}

nn::Tensor condition_queries(const nn::Tensor& queries, const ConditionVector& cv, const nn::TaskEncoder& encoder) {
  auto z = cv.concatenated();
  if (z.size() != encoder.input_dim()) {
    throw ShapeError("condition width " + std::to_string(z.size()) + " does not match task encoder input " +
                     std::to_string(encoder.input_dim()));
  }
  if (encoder.output_dim() != queries.cols()) throw ShapeError("task encoder output differs from query width");
  const auto width = z.size();
  nn::Tensor projected = encoder.forward(nn::Tensor::constant(1, width, std::move(z)));
  return nn::add_row(queries, projected);
}

nlohmann::json condition_to_json(const Condition& c) {
  nlohmann::json j;
  j["ordinal"] = c.ordinal ? nlohmann::json::array({c.ordinal->first, c.ordinal->last}) : nlohmann::json(nullptr);
  j["scale"] = c.scale ? nlohmann::json(std::string(synthesis::to_string(*c.scale))) : nlohmann::json(nullptr);
  return j;
}

Condition condition_from_json(const nlohmann::json& j, int target_category) {
  Condition c;
  c.target_category = target_category;
  if (!j.at("ordinal").is_null()) c.ordinal = OrdinalRange{j["ordinal"].at(0).get<int>(), j["ordinal"].at(1).get<int>()};
  if (!j.at("scale").is_null()) c.scale = synthesis::scale_bucket_from_string(j["scale"].get<std::string>());
  return c;
}

}  // namespace ltp::pretext
