#pragma once

#include <cstdint>
#include <vector>

#include "ltp/featbank.hpp"
#include "ltp/synthesis.hpp"

// Synthetic untrimmed benchmark used for fine-tuning and evaluation. Actions
// come from categories held out of pre-training; the stretches between them
// are filled with clips of the pre-training categories.
namespace ltp::downstream {

using synthesis::ActionInstance;

struct DownstreamParams {
  int video_len = 192;
  int instances_min = 1;
  int instances_max = 6;
  double coverage_min = 0.03;  // per-instance duration ratio range
  double coverage_max = 0.6;
  double total_coverage_max = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DownstreamParams&) const = default;
};

struct Video {
  FeatureMatrix features;
  std::vector<ActionInstance> instances;  // sorted by start, pairwise disjoint

  int length() const { return static_cast<int>(features.rows); }
  bool operator==(const Video&) const = default;
};

struct DetectionDataset {
  int num_classes = 0;
  int feature_dim = 0;
  int video_len = 0;
  std::vector<Video> videos;

  bool operator==(const DetectionDataset&) const = default;
};

// Video `index` of the stream defined by params.seed. `actions` supplies the
// labeled classes, `background` the filler clips.
Video make_video(const featbank::FeatureBank& actions, const featbank::FeatureBank& background,
                 const DownstreamParams& params, std::uint64_t index);

DetectionDataset generate(const featbank::FeatureBank& actions, const featbank::FeatureBank& background,
                          const DownstreamParams& params, std::uint64_t first, std::size_t count);

}  // namespace ltp::downstream
