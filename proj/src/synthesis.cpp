#include "ltp/synthesis.hpp"

#include <algorithm>
#include <cmath>

namespace ltp::synthesis {

std::string_view to_string(ScaleBucket b) {
  switch (b) {
    case ScaleBucket::XS: return "XS";
    case ScaleBucket::S: return "S";
    case ScaleBucket::L: return "L";
    case ScaleBucket::XL: return "XL";
  }
  return "?";
}

ScaleBucket scale_bucket_from_string(std::string_view s) {
  if (s == "XS") return ScaleBucket::XS;
  if (s == "S") return ScaleBucket::S;
  if (s == "L") return ScaleBucket::L;
  if (s == "XL") return ScaleBucket::XL;
  throw DomainError("unknown scale bucket '" + std::string(s) + "'");
}

ScaleBucket assign_scale_bucket(double r) {
  if (!(r > 0.0 && r <= 1.0)) throw DomainError("duration ratio must lie in (0, 1]");
  if (r < 0.25) return ScaleBucket::XS;
  if (r < 0.50) return ScaleBucket::S;
  if (r < 0.75) return ScaleBucket::L;
  return ScaleBucket::XL;
}

void SynthesisParams::validate(const FeatureBank& bank) const {
  if (target_len < 1) throw ConfigError("target_len must be positive");
  if (num_background < 1) throw ConfigError("num_background must be positive");
  if (targets_min < 1) throw ConfigError("targets_min must be >= 1");
  if (targets_max < targets_min) throw ConfigError("targets range is empty");
  if (max_instances < 1) throw ConfigError("max_instances must be positive");
  if (targets_max > max_instances) throw ConfigError("targets_max exceeds max_instances");
  if (!(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) {
    throw ConfigError("crop fraction range must be a subrange of (0, 1]");
  }
  if (bank.num_categories() < 2) throw ConfigError("synthesis needs at least two categories");
  if (target_len < bank.config().clip_len_max) throw ConfigError("target_len shorter than the longest clip");
}

Background concat_to_length(const std::vector<const ClipFeatures*>& clips, int target_len, int feature_dim) {
  if (clips.empty() || target_len < 1) throw ConfigError("nothing to concatenate");
  const auto d = static_cast<std::size_t>(feature_dim);
  Background out{FeatureMatrix(static_cast<std::size_t>(target_len), d), {}};
  int t = 0;
  for (std::size_t i = 0; t < target_len; i = (i + 1) % clips.size()) {
    const ClipFeatures& clip = *clips[i];
    if (clip.features.cols != d) throw ShapeError("clip feature dimension mismatch");
    const int take = std::min(clip.length(), target_len - t);
    std::copy_n(clip.features.data.begin(), static_cast<std::size_t>(take) * d,
                out.features.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * d));
    out.spans.push_back({clip.category, {t, t + take}});
    t += take;
  }
  return out;
}

Background build_background(const FeatureBank& bank, int target, int num_background, int target_len,
                            Rng& rng) {
  const int k_count = bank.num_categories();
  if (k_count < 2) throw ConfigError("background needs at least one non-target category");
  if (target < 0 || target >= k_count) throw LookupError("unknown target category " + std::to_string(target));
  if (num_background < 1 || target_len < 1) throw ConfigError("background size must be positive");

  std::vector<const ClipFeatures*> picked;
  for (int i = 0; i < num_background; ++i) {
    int cat = uniform_int(rng, 0, k_count - 2);
    if (cat >= target) ++cat;
    picked.push_back(&featbank::sample_clip(bank, cat, rng));
  }

  return concat_to_length(picked, target_len, bank.feature_dim());
}

std::vector<ClipFeatures> sample_targets(const FeatureBank& bank, int category, int count, Rng& rng) {
  if (count < 1) throw DomainError("at least one target clip is required");
  std::vector<ClipFeatures> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(featbank::sample_clip(bank, category, rng));
  return out;
}

ClipFeatures crop_random(const ClipFeatures& clip, double fraction_lo, double fraction_hi, Rng& rng) {
  if (!(fraction_lo > 0.0 && fraction_lo <= fraction_hi && fraction_hi <= 1.0)) {
    throw ConfigError("crop fraction range must be a subrange of (0, 1]");
  }
  const double f = uniform_real(rng, fraction_lo, fraction_hi);
  const int len = static_cast<int>(std::lround(f * clip.length()));
  if (len < 1) throw ConfigError("crop fraction produces an empty clip");
  const int start = uniform_int(rng, 0, clip.length() - len);
  const std::size_t d = clip.features.cols;
  ClipFeatures out{clip.category, FeatureMatrix(static_cast<std::size_t>(len), d)};
  auto first = clip.features.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(start) * d);
  std::copy_n(first, out.features.data.size(), out.features.data.begin());
  return out;
}

std::vector<Span> merge_overlaps(std::vector<Span> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.start != b.start ? a.start < b.start : a.end < b.end; });
  std::vector<Span> out;
  for (const Span& s : spans) {
    if (!out.empty() && s.start <= out.back().end) {
      out.back().end = std::max(out.back().end, s.end);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<ActionInstance> finalize_instances(int category, const std::vector<Span>& inserted, int seq_len) {
  std::vector<ActionInstance> out;
  int ordinal = 0;
  for (const Span& s : merge_overlaps(inserted)) {
    out.push_back({category, s, ++ordinal, static_cast<double>(s.length()) / seq_len});
  }
  return out;
}

SynthesizedSample synthesize_sample(const FeatureBank& bank, const SynthesisParams& params, Rng& rng) {
  params.validate(bank);
  const int target = uniform_int(rng, 0, bank.num_categories() - 1);
  Background bg = build_background(bank, target, params.num_background, params.target_len, rng);

  const int n_targets = uniform_int(rng, params.targets_min, params.targets_max);
  const auto clips = sample_targets(bank, target, n_targets, rng);

  const std::size_t d = bg.features.cols;
  const int len_total = params.target_len;
  // Row owner: index into bg.spans, or -1 once a target clip covers it.
  std::vector<int> owner(static_cast<std::size_t>(len_total));
  for (std::size_t i = 0; i < bg.spans.size(); ++i) {
    for (int t = bg.spans[i].interval.start; t < bg.spans[i].interval.end; ++t) {
      owner[static_cast<std::size_t>(t)] = static_cast<int>(i);
    }
  }

  std::vector<Span> inserted;
  for (const ClipFeatures& clip : clips) {
    const ClipFeatures crop = crop_random(clip, params.crop_min, params.crop_max, rng);
    const int pos = uniform_int(rng, 0, len_total - crop.length());
    std::copy(crop.features.data.begin(), crop.features.data.end(),
              bg.features.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(pos) * d));
    for (int t = pos; t < pos + crop.length(); ++t) owner[static_cast<std::size_t>(t)] = -1;
    inserted.push_back({pos, pos + crop.length()});
  }

  SynthesizedSample out;
  out.target_category = target;
  out.instances = finalize_instances(target, inserted, len_total);
  for (int t = 0; t < len_total;) {
    const int o = owner[static_cast<std::size_t>(t)];
    int u = t;
    while (u < len_total && owner[static_cast<std::size_t>(u)] == o) ++u;
    if (o >= 0) out.background_spans.push_back({bg.spans[static_cast<std::size_t>(o)].category, {t, u}});
    t = u;
  }
  out.features = std::move(bg.features);
  return out;
}

SynthesizedSample synthesize_indexed(const FeatureBank& bank, const SynthesisParams& params,
                                     std::uint64_t index) {
  Rng rng = make_rng(params.seed, index);
  return synthesize_sample(bank, params, rng);
}

std::vector<SynthesizedSample> synthesize_many(const FeatureBank& bank, const SynthesisParams& params,
                                               std::uint64_t first, std::size_t count, bool parallel) {
  params.validate(bank);
  std::vector<SynthesizedSample> out(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = synthesize_indexed(bank, params, first + static_cast<std::uint64_t>(i));
  }
  return out;
}

std::optional<std::string> check_sample_invariants(const SynthesizedSample& s, const SynthesisParams& params) {
  const int len = s.length();
  if (len != params.target_len) return "sequence length differs from target_len";
  const auto n = s.instances.size();
  if (n < 1 || n > static_cast<std::size_t>(params.max_instances)) return "instance count out of [1, N_max]";

  std::vector<int> cover(static_cast<std::size_t>(len), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = s.instances[i];
    if (inst.category != s.target_category) return "instance of non-target category";
    if (inst.interval.start < 0 || inst.interval.start >= inst.interval.end || inst.interval.end > len) {
      return "instance interval out of bounds";
    }
    if (inst.ordinal != static_cast<int>(i) + 1) return "ordinals not contiguous in start order";
    if (i > 0 && inst.interval.start <= s.instances[i - 1].interval.end) return "instances overlap or touch";
    if (inst.r != static_cast<double>(inst.interval.length()) / len) return "r differs from length ratio";
    for (int t = inst.interval.start; t < inst.interval.end; ++t) ++cover[static_cast<std::size_t>(t)];
  }
  for (const auto& b : s.background_spans) {
    if (b.category == s.target_category) return "background span of the target category";
    if (b.interval.start < 0 || b.interval.start >= b.interval.end || b.interval.end > len) {
      return "background span out of bounds";
    }
    for (int t = b.interval.start; t < b.interval.end; ++t) ++cover[static_cast<std::size_t>(t)];
  }
  for (int c : cover) {
    if (c != 1) return "instances and background spans do not partition the sequence";
  }
  return std::nullopt;
}

}  // namespace ltp::synthesis
