#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ltp/evalkit.hpp"

using namespace ltp;
using namespace ltp::evalkit;

namespace {

GroundTruth gt(int video, double s, double e, int cat = 0) { return {video, cat, {s, e}}; }
Detection det(int video, double s, double e, double score, int cat = 0) { return {video, cat, {s, e}, score}; }

struct RandomSet {
  std::vector<Detection> preds;
  std::vector<GroundTruth> gts;
};

RandomSet random_set(Rng& rng) {
  RandomSet r;
  const int videos = uniform_int(rng, 1, 4);
  for (int v = 0; v < videos; ++v) {
    const int n = uniform_int(rng, 1, 4);
    for (int i = 0; i < n; ++i) {
      const double s = uniform_real(rng, 0, 80);
      const double len = uniform_real(rng, 2, 20);
      const int cat = uniform_int(rng, 0, 2);
      r.gts.push_back(gt(v, s, s + len, cat));
      for (int k = 0; k < 3; ++k) {
        const double js = s + uniform_real(rng, -4, 4);
        r.preds.push_back(det(v, js, js + len * uniform_real(rng, 0.6, 1.4), uniform_real(rng, 0, 1), cat));
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double s = uniform_real(rng, 0, 90);
      r.preds.push_back(det(v, s, s + 5, uniform_real(rng, 0, 1), uniform_int(rng, 0, 2)));
    }
  }
  return r;
}

}  // namespace

TEST_CASE("tiou") {
  CHECK(tiou({0, 2}, {0, 2}) == 1.0);
  CHECK(tiou({0, 1}, {2, 3}) == 0.0);
  CHECK(tiou({0, 2}, {1, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(tiou({1, 1}, {0, 2}), DomainError);
  CHECK_THROWS_AS(tiou({0, 2}, {3, 2}), DomainError);
  Rng rng = make_rng(1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double a = uniform_real(rng, 0, 10), b = uniform_real(rng, 0, 10);
    const Segment x{a, a + uniform_real(rng, 0.1, 5)}, y{b, b + uniform_real(rng, 0.1, 5)};
    CHECK(tiou(x, y) == tiou(y, x));
    CHECK(tiou(x, y) >= 0.0);
    CHECK(tiou(x, y) <= 1.0);
    if (!(x == y)) CHECK(tiou(x, y) < 1.0);
  }
}

TEST_CASE("average precision hand cases") {
  CHECK(*average_precision({det(0, 0, 10, 0.9)}, {gt(0, 0, 10)}, 0.5) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(*average_precision({}, {gt(0, 0, 10)}, 0.5) == 0.0);
  CHECK_FALSE(average_precision({det(0, 0, 10, 0.9)}, {}, 0.5).has_value());
  // Ranked [correct, wrong, correct] against two GTs: (1/1 + 2/3) / 2.
  const std::vector<GroundTruth> two{gt(0, 0, 10), gt(0, 20, 30)};
  const std::vector<Detection> ranked{det(0, 0, 10, 0.9), det(0, 50, 60, 0.8), det(0, 20, 30, 0.7)};
  CHECK(std::fabs(*average_precision(ranked, two, 0.5) - 0.8333333333333333) < 1e-9);
  // A duplicate of a matched detection is a false positive.
  const std::vector<Detection> dup{det(0, 0, 10, 0.9), det(0, 0, 10, 0.8)};
  CHECK(std::fabs(*average_precision(dup, {gt(0, 0, 10)}, 0.5) - 1.0) < 1e-9);
  CHECK(std::fabs(*average_precision(dup, two, 0.5) - 0.5) < 1e-9);
  // Detections only match GT of their own video.
  CHECK(*average_precision({det(1, 0, 10, 0.9)}, {gt(0, 0, 10)}, 0.5) == 0.0);
}

TEST_CASE("ap ignores score scale") {
  Rng rng = make_rng(2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_set(rng);
    std::vector<Detection> preds, scaled;
    std::vector<GroundTruth> gts;
    for (const auto& d : s.preds) {
      if (d.category == 0) preds.push_back(d);
    }
    for (const auto& g : s.gts) {
      if (g.category == 0) gts.push_back(g);
    }
    for (auto d : preds) {
      d.score = std::exp(3.0 * d.score) - 0.5;
      scaled.push_back(d);
    }
    const auto a = average_precision(preds, gts, 0.5);
    const auto b = average_precision(scaled, gts, 0.5);
    CHECK(a.has_value() == b.has_value());
    if (a) CHECK(*a == *b);
  }
}

TEST_CASE("protocols") {
  CHECK(thresholds(Protocol::ThumosStyle).size() == 5u);
  CHECK(thresholds(Protocol::ThumosStyle).front() == doctest::Approx(0.3));
  const auto anet = thresholds(Protocol::AnetStyle);
  CHECK(anet.size() == 10u);
  CHECK(anet.back() == doctest::Approx(0.95));
  CHECK(report_points(Protocol::AnetStyle) == std::vector<double>{0.5, 0.75, 0.95});
  CHECK(protocol_from_string(to_string(Protocol::ThumosStyle)) == Protocol::ThumosStyle);
  CHECK_THROWS_AS(protocol_from_string("coco"), ConfigError);
}

TEST_CASE("map tables") {
  SUBCASE("perfect predictions") {
    const std::vector<GroundTruth> gts{gt(0, 0, 10, 0), gt(0, 20, 30, 1), gt(1, 5, 9, 1)};
    std::vector<Detection> preds;
    for (const auto& g : gts) preds.push_back({g.video, g.category, g.segment, 1.0});
    const auto t = map_over_thresholds(preds, gts, thresholds(Protocol::AnetStyle));
    for (double m : t.map) CHECK(m == doctest::Approx(1.0));
    CHECK(t.average == doctest::Approx(1.0));
  }
  SUBCASE("toy set with AP 1 up to 0.7") {
    // tIoU 10/14 lies in [0.7, 0.75).
    const auto t = map_over_thresholds({det(0, 0, 10, 1.0)}, {gt(0, 0, 14)}, thresholds(Protocol::AnetStyle));
    CHECK(t.average == doctest::Approx(0.5));
  }
  SUBCASE("categories without GT are skipped") {
    const auto t = map_over_thresholds({det(0, 0, 10, 1.0), det(0, 0, 10, 1.0, 4)}, {gt(0, 0, 10)}, {0.5});
    CHECK(t.map[0] == doctest::Approx(1.0));
    CHECK(t.per_category.count(4) == 0);
  }
  SUBCASE("threshold validation") {
    CHECK_THROWS_AS(map_over_thresholds({}, {}, {0.5, 0.5}), ConfigError);
    CHECK_THROWS_AS(map_over_thresholds({}, {}, {0.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(map_over_thresholds({}, {}, {0.5, 1.0}), ConfigError);
  }
}

TEST_CASE("map is monotone in theta") {
  Rng rng = make_rng(3, 3);
  const auto thetas = thresholds(Protocol::AnetStyle);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng);
    const auto t = map_over_thresholds(s.preds, s.gts, thetas);
    for (std::size_t i = 1; i < t.map.size(); ++i) CHECK(t.map[i] <= t.map[i - 1] + 1e-12);
  }
}

TEST_CASE("buckets") {
  CHECK(coverage_bucket(0.1) == "XS");
  CHECK(coverage_bucket(0.2) == "XS");
  CHECK(coverage_bucket(0.21) == "S");
  CHECK(coverage_bucket(1.0) == "XL");
  CHECK(instance_bucket(1) == "XS");
  CHECK(instance_bucket(3) == "S");
  CHECK(instance_bucket(8) == "M");
  CHECK(instance_bucket(9) == "L");
  CHECK_THROWS_AS(coverage_bucket(0.0), DomainError);
  CHECK_THROWS_AS(instance_bucket(0), DomainError);

  SUBCASE("every GT lands in exactly one bucket per axis") {
    Rng rng = make_rng(4, 4);
    const auto s = random_set(rng);
    std::map<int, double> lengths;
    for (const auto& g : s.gts) lengths[g.video] = 100.0;
    const auto res = detad_sensitivity(s.preds, s.gts, lengths, {0.5});
    std::size_t cov = 0, ins = 0;
    for (const auto& b : res) (b.axis == "coverage" ? cov : ins) += b.gt_count;
    CHECK(cov == s.gts.size());
    CHECK(ins == s.gts.size());
  }
  SUBCASE("all GT in one bucket reproduces the global map") {
    const std::vector<GroundTruth> gts{gt(0, 0, 10), gt(0, 30, 40), gt(1, 10, 12)};
    const std::vector<Detection> preds{det(0, 1, 10, 0.9), det(0, 60, 70, 0.8), det(1, 10, 12, 0.4)};
    const std::map<int, double> lengths{{0, 100.0}, {1, 100.0}};
    const auto global = map_over_thresholds(preds, gts, {0.5, 0.7});
    for (const auto& b : detad_sensitivity(preds, gts, lengths, {0.5, 0.7})) {
      if (b.axis != "coverage") continue;
      if (b.bucket == "XS") {
        CHECK(*b.average_map == doctest::Approx(global.average));
      } else {
        CHECK_FALSE(b.average_map.has_value());
      }
    }
  }
}

TEST_CASE("jsonl and reports") {
  const auto dir = std::filesystem::temp_directory_path() / "ltp_test_eval";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::vector<Detection> dets{det(0, 1.5, 9.25, 0.75, 2), det(3, 0, 4, 0.125)};
  const std::vector<GroundTruth> gts{gt(0, 1, 9, 2)};
  write_detections(dir / "p.jsonl", dets);
  write_ground_truth(dir / "g.jsonl", gts);
  CHECK(read_detections(dir / "p.jsonl") == dets);
  CHECK(read_ground_truth(dir / "g.jsonl") == gts);
  write_text_atomic(dir / "bad.jsonl", "{\"video_id\": 0}\n");
  CHECK_THROWS_AS(read_detections(dir / "bad.jsonl"), FormatError);

  EvalReport r;
  r.protocol = Protocol::AnetStyle;
  r.table = map_over_thresholds(dets, gts, thresholds(Protocol::AnetStyle));
  const auto csv = report_to_csv(r);
  CHECK(csv.find("threshold,0.50,") != std::string::npos);
  CHECK(csv.find("threshold,0.75,") != std::string::npos);
  CHECK(csv.find("threshold,0.95,") != std::string::npos);
  CHECK(csv.find("average,avg,") != std::string::npos);
  r.protocol = Protocol::ThumosStyle;
  r.table = map_over_thresholds(dets, gts, thresholds(Protocol::ThumosStyle));
  const auto t = report_to_csv(r);
  for (const char* k : {"0.30", "0.40", "0.50", "0.60", "0.70"}) CHECK(t.find(std::string("threshold,") + k) != std::string::npos);
  write_report(dir, r);
  CHECK(std::filesystem::exists(dir / "eval_report.json"));
  CHECK(std::filesystem::exists(dir / "eval_report.csv"));
}
