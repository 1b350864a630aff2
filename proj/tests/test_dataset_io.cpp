#include <filesystem>

#include "doctest.h"
#include "ltp/dataset_io.hpp"
#include "ltp/downstream.hpp"
#include "ltp/featbank.hpp"
#include "oracles.hpp"

using namespace ltp;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ltp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

featbank::FeatureBank bank() {
  featbank::BankConfig c;
  c.num_categories = 10;
  c.feature_dim = 8;
  c.clips_per_category = 4;
  return featbank::generate_bank(c);
}

downstream::DownstreamParams down_params() {
  downstream::DownstreamParams p;
  p.video_len = 64;
  p.seed = 5;
  return p;
}

}  // namespace

TEST_CASE("downstream videos") {
  const auto b = bank();
  const auto actions = b.slice_categories(6, 4);
  const auto background = b.slice_categories(0, 6);
  const auto ds = downstream::generate(actions, background, down_params(), 0, 40);
  CHECK(ds.num_classes == 4);
  CHECK(ds.videos.size() == 40u);
  for (const auto& v : ds.videos) {
    CHECK(v.length() == 64);
    REQUIRE_FALSE(v.instances.empty());
    double total = 0;
    for (std::size_t i = 0; i < v.instances.size(); ++i) {
      const auto& a = v.instances[i];
      CHECK(a.category >= 0);
      CHECK(a.category < 4);
      CHECK(a.interval.start >= 0);
      CHECK(a.interval.end <= 64);
      CHECK(a.interval.start < a.interval.end);
      if (i > 0) CHECK(v.instances[i - 1].interval.end <= a.interval.start);
      total += a.r;
    }
    CHECK(total <= down_params().total_coverage_max + 1e-12);
  }
  CHECK(downstream::make_video(actions, background, down_params(), 7) == ds.videos[7]);
}

TEST_CASE("downstream action rows come from held-out prototypes") {
  featbank::BankConfig c;
  c.num_categories = 10;
  c.feature_dim = 8;
  c.clips_per_category = 4;
  c.prototype_noise = 0.0;
  c.drift_amplitude = 0.0;
  const auto b = featbank::generate_bank(c);
  const auto actions = b.slice_categories(6, 4);
  const auto background = b.slice_categories(0, 6);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto v = downstream::make_video(actions, background, down_params(), i);
    const auto labels = oracle::nearest_prototype(v.features, b.prototypes());
    for (int t = 0; t < v.length(); ++t) {
      int expected = -1;
      for (const auto& a : v.instances) {
        if (a.interval.start <= t && t < a.interval.end) expected = 6 + a.category;
      }
      if (expected >= 0) {
        CHECK(labels[static_cast<std::size_t>(t)] == expected);
      } else {
        CHECK(labels[static_cast<std::size_t>(t)] < 6);
      }
    }
  }
}

TEST_CASE("detection dataset round trip") {
  const auto b = bank();
  const auto ds = downstream::generate(b.slice_categories(6, 4), b.slice_categories(0, 6), down_params(), 0, 12);
  const auto dir = temp_dir("det_rt");
  dataset_io::save_detection(dir, ds, {{"note", "x"}});
  nlohmann::json meta;
  CHECK(dataset_io::load_detection(dir, &meta) == ds);
  CHECK(meta.at("note") == "x");

  SUBCASE("trailing bytes") {
    auto bytes = read_file(dir / "samples.bin");
    bytes.push_back(0);
    write_file_atomic(dir / "samples.bin", bytes);
    CHECK_THROWS_AS(dataset_io::load_detection(dir), FormatError);
  }
  SUBCASE("truncated payload") {
    auto bytes = read_file(dir / "samples.bin");
    bytes.resize(bytes.size() - 4);
    write_file_atomic(dir / "samples.bin", bytes);
    CHECK_THROWS_AS(dataset_io::load_detection(dir), FormatError);
  }
  SUBCASE("wrong kind") { CHECK_THROWS_AS(dataset_io::load_pretext(dir), FormatError); }
}

TEST_CASE("pretext dataset round trip") {
  const auto b = bank();
  synthesis::SynthesisParams p;
  p.target_len = 40;
  p.num_background = 4;
  dataset_io::PretextDataset ds;
  ds.samples = synthesis::synthesize_many(b, p, 0, 10, false);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    Rng rng = make_rng(2, i);
    ds.conditions.push_back(pretext::sample_condition(ds.samples[i], pretext::ConditionSampling{0.5, true}, rng));
  }
  const auto dir = temp_dir("pre_rt");
  dataset_io::save_pretext(dir, ds);
  const auto back = dataset_io::load_pretext(dir);
  CHECK(back.samples == ds.samples);
  CHECK(back.conditions == ds.conditions);
}
