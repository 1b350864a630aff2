#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "ltp/common.hpp"
#include "ltp/featbank.hpp"

namespace ltp::synthesis {

using featbank::ClipFeatures;
using featbank::FeatureBank;

enum class ScaleBucket { XS = 0, S = 1, L = 2, XL = 3 };

std::string_view to_string(ScaleBucket b);
ScaleBucket scale_bucket_from_string(std::string_view s);

// XS: r < 0.25, S: [0.25, 0.5), L: [0.5, 0.75), XL: r >= 0.75.
ScaleBucket assign_scale_bucket(double r);

struct SynthesisParams {
  int target_len = 192;
  int num_background = 16;
  int targets_min = 1;
  int targets_max = 6;
  double crop_min = 0.25;
  double crop_max = 1.0;
  int max_instances = 12;  // N_max
  std::uint64_t seed = 0;

  void validate(const FeatureBank& bank) const;
  bool operator==(const SynthesisParams&) const = default;
};

struct ActionInstance {
  int category = 0;
  Span interval;
  int ordinal = 0;  // 1-based, by start among instances of the same sample
  double r = 0.0;   // interval length / sequence length

  double start_norm(int seq_len) const { return static_cast<double>(interval.start) / seq_len; }
  double end_norm(int seq_len) const { return static_cast<double>(interval.end) / seq_len; }
  bool operator==(const ActionInstance&) const = default;
};

struct BackgroundSpan {
  int category = 0;
  Span interval;
  bool operator==(const BackgroundSpan&) const = default;
};

struct SynthesizedSample {
  FeatureMatrix features;
  int target_category = 0;
  std::vector<ActionInstance> instances;
  std::vector<BackgroundSpan> background_spans;

  int length() const { return static_cast<int>(features.rows); }
  bool operator==(const SynthesizedSample&) const = default;
};

struct Background {
  FeatureMatrix features;
  std::vector<BackgroundSpan> spans;
};

// Concatenates clips in order and cuts at `target_len`, cycling back to the
// first clip when the concatenation is short.
Background concat_to_length(const std::vector<const ClipFeatures*>& clips, int target_len, int feature_dim);

// Concatenates `num_background` clips of categories other than `target`. The
// concatenation is cut at `target_len`, or cycled from its start when short.
Background build_background(const FeatureBank& bank, int target, int num_background, int target_len,
                            Rng& rng);

// `count` clips of `category`, uniform with replacement.
std::vector<ClipFeatures> sample_targets(const FeatureBank& bank, int category, int count, Rng& rng);

// Contiguous slice of length round(f * T), f ~ U[fraction_lo, fraction_hi].
ClipFeatures crop_random(const ClipFeatures& clip, double fraction_lo, double fraction_hi, Rng& rng);

// Merges overlapping or touching spans into their hulls; sorted by start.
std::vector<Span> merge_overlaps(std::vector<Span> spans);

// Records an insertion list into the final instance set: merge same-category
// overlaps, drop nothing, assign ordinals by start and compute r.
std::vector<ActionInstance> finalize_instances(int category, const std::vector<Span>& inserted, int seq_len);

// Full class-wise synthesis: background template of non-target clips, then
// N_t cropped target clips written at uniform positions (later writes win).
SynthesizedSample synthesize_sample(const FeatureBank& bank, const SynthesisParams& params, Rng& rng);

// Sample `index` of the stream defined by params.seed.
SynthesizedSample synthesize_indexed(const FeatureBank& bank, const SynthesisParams& params,
                                     std::uint64_t index);

// Samples [first, first + count). With parallel=true the loop runs under
// OpenMP; output is identical to the serial path.
std::vector<SynthesizedSample> synthesize_many(const FeatureBank& bank, const SynthesisParams& params,
                                               std::uint64_t first, std::size_t count, bool parallel);

// Returns a description of the first violated invariant, or nullopt.
std::optional<std::string> check_sample_invariants(const SynthesizedSample& sample,
                                                   const SynthesisParams& params);

}  // namespace ltp::synthesis
