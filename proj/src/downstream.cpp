#include "ltp/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ltp::downstream {

void DownstreamParams::validate() const {
  if (video_len < 8) throw ConfigError("video_len must be >= 8");
  if (instances_min < 1 || instances_max < instances_min) throw ConfigError("invalid instance count range");
  if (!(coverage_min > 0.0 && coverage_min <= coverage_max && coverage_max <= 1.0)) {
    throw ConfigError("coverage range must be a subrange of (0, 1]");
  }
  if (!(total_coverage_max > 0.0 && total_coverage_max <= 1.0)) {
    throw ConfigError("total_coverage_max must lie in (0, 1]");
  }
  if (instances_max * 2 > video_len) throw ConfigError("video too short for instances_max");
}

namespace {

// Random clips of one category concatenated to exactly `len` rows.
synthesis::Background fill_category(const featbank::FeatureBank& bank, int category, int len, Rng& rng) {
  std::vector<const featbank::ClipFeatures*> picked;
  int total = 0;
  while (total < len) {
    picked.push_back(&featbank::sample_clip(bank, category, rng));
    total += picked.back()->length();
  }
  return synthesis::concat_to_length(picked, len, bank.feature_dim());
}

}  // namespace

Video make_video(const featbank::FeatureBank& actions, const featbank::FeatureBank& background,
                 const DownstreamParams& params, std::uint64_t index) {
  params.validate();
  if (actions.feature_dim() != background.feature_dim()) throw ShapeError("bank feature dimensions differ");
  Rng rng = make_rng(params.seed, index);
  const int len = params.video_len;

  // Filler: random background clips cycled to the full length.
  std::vector<const featbank::ClipFeatures*> filler;
  int filled = 0;
  while (filled < len) {
    const int cat = uniform_int(rng, 0, background.num_categories() - 1);
    filler.push_back(&featbank::sample_clip(background, cat, rng));
    filled += filler.back()->length();
  }
  Video video{synthesis::concat_to_length(filler, len, background.feature_dim()).features, {}};

  const int n = uniform_int(rng, params.instances_min, params.instances_max);
  std::vector<int> lengths(static_cast<std::size_t>(n));
  for (int& l : lengths) {
    const double ratio = uniform_real(rng, params.coverage_min, params.coverage_max);
    l = std::max(2, static_cast<int>(std::lround(ratio * len)));
  }
  const int budget = static_cast<int>(std::floor(params.total_coverage_max * len));
  const int used = std::accumulate(lengths.begin(), lengths.end(), 0);
  if (used > budget) {
    const double shrink = static_cast<double>(budget) / used;
    for (int& l : lengths) l = std::max(2, static_cast<int>(std::floor(l * shrink)));
  }
  while (std::accumulate(lengths.begin(), lengths.end(), 0) > len) --*std::max_element(lengths.begin(), lengths.end());
  const int slack = len - std::accumulate(lengths.begin(), lengths.end(), 0);

  // Gaps between consecutive instances: n + 1 pieces summing to `slack`.
  std::vector<int> cuts(static_cast<std::size_t>(n));
  for (int& c : cuts) c = uniform_int(rng, 0, slack);
  std::sort(cuts.begin(), cuts.end());

  const std::size_t d = video.features.cols;
  int cursor = 0;
  int prev_cut = 0;
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    cursor += cuts[iu] - prev_cut;
    prev_cut = cuts[iu];
    const int category = uniform_int(rng, 0, actions.num_categories() - 1);
    const auto content = fill_category(actions, category, lengths[iu], rng);
    std::copy(content.features.data.begin(), content.features.data.end(),
              video.features.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(cursor) * d));
    const Span span{cursor, cursor + lengths[iu]};
    video.instances.push_back({category, span, i + 1, static_cast<double>(span.length()) / len});
    cursor += lengths[iu];
  }
  return video;
}

DetectionDataset generate(const featbank::FeatureBank& actions, const featbank::FeatureBank& background,
                          const DownstreamParams& params, std::uint64_t first, std::size_t count) {
  params.validate();
  DetectionDataset ds;
  ds.num_classes = actions.num_categories();
  ds.feature_dim = actions.feature_dim();
  ds.video_len = params.video_len;
  ds.videos.resize(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    ds.videos[static_cast<std::size_t>(i)] = make_video(actions, background, params, first + static_cast<std::uint64_t>(i));
  }
  return ds;
}

}  // namespace ltp::downstream
