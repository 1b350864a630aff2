#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "ltp/common.hpp"

namespace ltp::featbank {

struct BankConfig {
  int num_categories = 40;
  int feature_dim = 64;
  int clips_per_category = 50;
  int clip_len_min = 8;
  int clip_len_max = 16;
  double prototype_noise = 0.3;  // sigma
  double drift_amplitude = 0.2;  // alpha
  std::uint64_t seed = 7;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;
  bool operator==(const BankConfig&) const = default;
};

// One trimmed clip: T feature rows of unit l2 norm, all from a single category.
struct ClipFeatures {
  int category = 0;
  FeatureMatrix features;

  int length() const { return static_cast<int>(features.rows); }
  bool operator==(const ClipFeatures&) const = default;
};

// Immutable after generation; concurrent readers are safe.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(BankConfig config, std::vector<std::vector<ClipFeatures>> clips, FeatureMatrix prototypes);

  const BankConfig& config() const { return config_; }
  int num_categories() const { return static_cast<int>(clips_.size()); }
  int feature_dim() const { return config_.feature_dim; }
  const std::vector<ClipFeatures>& clips(int category) const;
  const FeatureMatrix& prototypes() const { return prototypes_; }
  std::size_t total_clips() const;

  // Categories [first, first + count) as a new bank with ids renumbered from 0.
  FeatureBank slice_categories(int first, int count) const;

  bool operator==(const FeatureBank&) const = default;

 private:
  BankConfig config_;
  std::vector<std::vector<ClipFeatures>> clips_;
  FeatureMatrix prototypes_;
};

// Row t of a clip of category k is
//   normalize(prototype_k + alpha * drift_t + sigma * eps_t)
// where drift is a per-clip Gaussian random walk smoothed by a 3-tap moving
// average. Bit-identical output for equal configs.
FeatureBank generate_bank(const BankConfig& config);

// Uniform choice among the clips of `category`. Throws LookupError for an
// unknown category.
const ClipFeatures& sample_clip(const FeatureBank& bank, int category, Rng& rng);

nlohmann::json config_to_json(const BankConfig& c);
BankConfig config_from_json(const nlohmann::json& j);

// Directory layout: manifest.json + clips.bin (row-major float32 LE).
void save_bank(const FeatureBank& bank, const std::filesystem::path& dir);
FeatureBank load_bank(const std::filesystem::path& dir);

}  // namespace ltp::featbank
