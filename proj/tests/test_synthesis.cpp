#include "doctest.h"
#include "ltp/featbank.hpp"
#include "ltp/synthesis.hpp"
#include "oracles.hpp"

using namespace ltp;
using namespace ltp::synthesis;

namespace {

featbank::BankConfig bank_config(double noise = 0.3, double drift = 0.2) {
  featbank::BankConfig c;
  c.num_categories = 8;
  c.feature_dim = 16;
  c.clips_per_category = 6;
  c.prototype_noise = noise;
  c.drift_amplitude = drift;
  c.seed = 3;
  return c;
}

SynthesisParams params() {
  SynthesisParams p;
  p.target_len = 64;
  p.num_background = 6;
  p.seed = 21;
  return p;
}

ClipFeatures ramp_clip(int category, int len, int d) {
  ClipFeatures c{category, FeatureMatrix(static_cast<std::size_t>(len), static_cast<std::size_t>(d))};
  for (int t = 0; t < len; ++t) {
    for (int j = 0; j < d; ++j) c.features(t, j) = static_cast<float>(100 * category + t);
  }
  return c;
}

}  // namespace

TEST_CASE("scale buckets") {
  CHECK(assign_scale_bucket(0.10) == ScaleBucket::XS);
  CHECK(assign_scale_bucket(0.25) == ScaleBucket::S);
  CHECK(assign_scale_bucket(0.4999) == ScaleBucket::S);
  CHECK(assign_scale_bucket(0.50) == ScaleBucket::L);
  CHECK(assign_scale_bucket(0.75) == ScaleBucket::XL);
  CHECK(assign_scale_bucket(1.0) == ScaleBucket::XL);
  CHECK_THROWS_AS(assign_scale_bucket(0.0), DomainError);
  CHECK_THROWS_AS(assign_scale_bucket(1.5), DomainError);
  for (auto b : {ScaleBucket::XS, ScaleBucket::S, ScaleBucket::L, ScaleBucket::XL}) {
    CHECK(scale_bucket_from_string(to_string(b)) == b);
  }
  CHECK_THROWS_AS(scale_bucket_from_string("M"), DomainError);
}

TEST_CASE("concat_to_length is exact concatenation") {
  const auto a = ramp_clip(1, 10, 3);
  const auto b = ramp_clip(2, 12, 3);
  const auto bg = concat_to_length({&a, &b}, 22, 3);
  REQUIRE(bg.features.rows == 22u);
  for (int t = 0; t < 10; ++t) CHECK(bg.features(t, 0) == a.features(t, 0));
  for (int t = 0; t < 12; ++t) CHECK(bg.features(10 + t, 2) == b.features(t, 2));
  REQUIRE(bg.spans.size() == 2u);
  CHECK(bg.spans[1].interval == Span{10, 22});

  SUBCASE("short input cycles") {
    const auto c = concat_to_length({&a}, 25, 3);
    CHECK(c.features(10, 0) == a.features(0, 0));
    CHECK(c.features(24, 0) == a.features(4, 0));
  }
  SUBCASE("long input is cut") {
    const auto c = concat_to_length({&a, &b}, 15, 3);
    CHECK(c.features.rows == 15u);
    CHECK(c.spans.back().interval.end == 15);
  }
}

TEST_CASE("background excludes the target category") {
  const auto bank = featbank::generate_bank(bank_config(0.0, 0.0));
  for (int target = 0; target < bank.num_categories(); ++target) {
    Rng rng = make_rng(9, static_cast<std::uint64_t>(target));
    const auto bg = build_background(bank, target, 6, 64, rng);
    CHECK(bg.features.rows == 64u);
    for (int k : oracle::nearest_prototype(bg.features, bank.prototypes())) CHECK(k != target);
  }
  Rng r1 = make_rng(4, 4), r2 = make_rng(4, 4);
  CHECK(build_background(bank, 1, 6, 64, r1).features == build_background(bank, 1, 6, 64, r2).features);
  CHECK_THROWS_AS(build_background(bank, 99, 6, 64, r1), LookupError);
}

TEST_CASE("sample_targets") {
  const auto bank = featbank::generate_bank(bank_config());
  Rng rng = make_rng(1, 1);
  const auto t = sample_targets(bank, 5, 3, rng);
  CHECK(t.size() == 3u);
  for (const auto& c : t) CHECK(c.category == 5);
  CHECK_THROWS_AS(sample_targets(bank, 5, 0, rng), DomainError);
}

TEST_CASE("crop_random") {
  const auto clip = ramp_clip(0, 16, 2);
  Rng rng = make_rng(2, 2);
  SUBCASE("full range is identity") { CHECK(crop_random(clip, 1.0, 1.0, rng) == clip); }
  SUBCASE("half length is a contiguous slice") {
    const auto c = crop_random(clip, 0.5, 0.5, rng);
    REQUIRE(c.length() == 8);
    const float first = c.features(0, 0);
    for (int t = 0; t < 8; ++t) CHECK(c.features(t, 0) == first + t);
  }
  SUBCASE("length bounds") {
    for (int i = 0; i < 1000; ++i) {
      const auto c = crop_random(clip, 0.25, 1.0, rng);
      CHECK(c.length() >= 4);
      CHECK(c.length() <= 16);
    }
  }
  CHECK_THROWS_AS(crop_random(clip, 0.0, 0.5, rng), ConfigError);
}

TEST_CASE("merge_overlaps") {
  CHECK(merge_overlaps({{0, 10}, {5, 15}}) == std::vector<Span>{{0, 15}});
  CHECK(merge_overlaps({{0, 5}, {10, 15}}) == std::vector<Span>{{0, 5}, {10, 15}});
  CHECK(merge_overlaps({{0, 4}, {3, 8}, {7, 12}}) == std::vector<Span>{{0, 12}});
  CHECK(merge_overlaps({{7, 12}, {0, 4}, {3, 8}}) == std::vector<Span>{{0, 12}});

  Rng rng = make_rng(77, 0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Span> spans;
    const int n = uniform_int(rng, 1, 8);
    for (int i = 0; i < n; ++i) {
      const int s = uniform_int(rng, 0, 40);
      spans.push_back({s, s + uniform_int(rng, 1, 12)});
    }
    CHECK(merge_overlaps(spans) == oracle::timeline_union(spans, 64));
  }
}

TEST_CASE("finalize_instances") {
  SUBCASE("single insertion") {
    const auto inst = finalize_instances(4, {{10, 26}}, 64);
    REQUIRE(inst.size() == 1u);
    CHECK(inst[0].interval == Span{10, 26});
    CHECK(inst[0].ordinal == 1);
    CHECK(inst[0].r == 16.0 / 64.0);
  }
  SUBCASE("overlapping insertions group into one instance") {
    const auto inst = finalize_instances(4, {{0, 10}, {5, 15}}, 64);
    REQUIRE(inst.size() == 1u);
    CHECK(inst[0].interval == Span{0, 15});
    CHECK(inst[0].ordinal == 1);
  }
  SUBCASE("ordinals follow start time") {
    const auto inst = finalize_instances(1, {{40, 50}, {0, 5}, {20, 30}}, 64);
    REQUIRE(inst.size() == 3u);
    for (int i = 0; i < 3; ++i) CHECK(inst[i].ordinal == i + 1);
    CHECK(inst[0].interval.start == 0);
    CHECK(inst[2].interval.start == 40);
  }
}

TEST_CASE("synthesized samples satisfy invariants") {
  const auto bank = featbank::generate_bank(bank_config());
  const auto p = params();
  const auto samples = synthesize_many(bank, p, 0, 300, false);
  for (const auto& s : samples) {
    const auto problem = oracle::sample_problem(s, p, bank.feature_dim());
    CHECK_MESSAGE(!problem, *problem);
    CHECK_FALSE(check_sample_invariants(s, p));
  }
}

TEST_CASE("target rows come from the target prototype and nothing else does") {
  const auto bank = featbank::generate_bank(bank_config(0.0, 0.0));
  const auto p = params();
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto s = synthesize_indexed(bank, p, i);
    const auto labels = oracle::nearest_prototype(s.features, bank.prototypes());
    std::vector<Span> spans;
    for (const auto& a : s.instances) spans.push_back(a.interval);
    CHECK(oracle::runs_of(labels, s.target_category) == spans);
  }
}

TEST_CASE("parallel and serial generation agree") {
  const auto bank = featbank::generate_bank(bank_config());
  const auto p = params();
  const auto serial = synthesize_many(bank, p, 5, 64, false);
  const auto parallel = synthesize_many(bank, p, 5, 64, true);
  CHECK(serial == parallel);
  CHECK(serial[3] == synthesize_indexed(bank, p, 8));
}

TEST_CASE("parameter validation") {
  const auto bank = featbank::generate_bank(bank_config());
  auto p = params();
  p.targets_max = p.max_instances + 1;
  CHECK_THROWS_AS(synthesize_indexed(bank, p, 0), ConfigError);
  p = params();
  p.target_len = 4;
  CHECK_THROWS_AS(synthesize_indexed(bank, p, 0), ConfigError);
  p = params();
  p.targets_min = 0;
  CHECK_THROWS_AS(synthesize_indexed(bank, p, 0), ConfigError);
}
