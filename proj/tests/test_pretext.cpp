#include <cmath>

#include "doctest.h"
#include "ltp/featbank.hpp"
#include "ltp/nn/layers.hpp"
#include "ltp/pretext.hpp"

using namespace ltp;
using namespace ltp::pretext;
using V = std::vector<double>;

namespace {

ActionInstance inst(int ordinal, int start, int end, int len = 100) {
  ActionInstance a;
  a.category = 0;
  a.interval = {start, end};
  a.ordinal = ordinal;
  a.r = static_cast<double>(end - start) / len;
  return a;
}

}  // namespace

TEST_CASE("basic encoding") {
  CHECK(encode_basic(0, 3) == V{1, 0, 0});
  CHECK(encode_basic(2, 3) == V{0, 0, 1});
  CHECK_THROWS_AS(encode_basic(3, 3), DomainError);
  CHECK_THROWS_AS(encode_basic(-1, 3), DomainError);
}

TEST_CASE("ordinal encoding") {
  CHECK(encode_ordinal(OrdinalRange{2, 4}, 4) == V{1, 0, 1, 0, 0, 0, 0, 0, 1});
  CHECK(encode_ordinal(std::nullopt, 4) == V(9, 0.0));
  CHECK(encode_ordinal(OrdinalRange{1, 1}, 4) == V{1, 1, 0, 0, 0, 1, 0, 0, 0});
  CHECK_THROWS_AS(encode_ordinal(OrdinalRange{3, 2}, 4), DomainError);
  CHECK_THROWS_AS(encode_ordinal(OrdinalRange{1, 5}, 4), DomainError);
  CHECK_THROWS_AS(encode_ordinal(OrdinalRange{0, 1}, 4), DomainError);
}

TEST_CASE("scale encoding") {
  CHECK(encode_scale(ScaleBucket::S) == V{1, 0, 1, 0, 0});
  CHECK(encode_scale(std::nullopt) == V{0, 0, 0, 0, 0});
  CHECK(encode_scale(ScaleBucket::XL) == V{1, 0, 0, 0, 1});
  CHECK(encode_scale(ScaleBucket::XS) == V{1, 1, 0, 0, 0});
}

TEST_CASE("condition width") {
  const auto cv = encode_condition(Condition{1, OrdinalRange{1, 2}, std::nullopt}, 5, 4);
  CHECK(cv.concatenated().size() == static_cast<std::size_t>(condition_width(5, 4)));
  CHECK(condition_width(5, 4) == 5 + 9 + 5);
}

TEST_CASE("round trip over every condition with N_max up to 12") {
  const int nt = 3;
  long checked = 0;
  for (int nmax = 1; nmax <= 12; ++nmax) {
    std::vector<std::optional<OrdinalRange>> ords{std::nullopt};
    for (int a = 1; a <= nmax; ++a) {
      for (int b = a; b <= nmax; ++b) ords.push_back(OrdinalRange{a, b});
    }
    std::vector<std::optional<ScaleBucket>> scales{std::nullopt, ScaleBucket::XS, ScaleBucket::S, ScaleBucket::L,
                                                   ScaleBucket::XL};
    for (int k = 0; k < nt; ++k) {
      for (const auto& o : ords) {
        for (const auto& s : scales) {
          const Condition c{k, o, s};
          const auto cv = encode_condition(c, nt, nmax);
          CHECK(valid_condition_vector(cv, nmax));
          CHECK(decode_condition(cv, nmax) == c);
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("decode rejects broken layouts") {
  auto cv = encode_condition(Condition{0, OrdinalRange{1, 2}, ScaleBucket::L}, 3, 4);
  SUBCASE("two hot categories") { cv.basic = {1, 1, 0}; }
  SUBCASE("ordinal payload without indicator") { cv.ordinal[0] = 0; }
  SUBCASE("two hot first-ordinal entries") { cv.ordinal[3] = 1; }
  SUBCASE("scale indicator without payload") { cv.scale = {1, 0, 0, 0, 0}; }
  SUBCASE("reversed range") {
    cv.ordinal = {1, 0, 0, 1, 0, 1, 0, 0, 0};  // first = 3, last = 1
  }
  CHECK_FALSE(valid_condition_vector(cv, 4));
  CHECK_THROWS_AS(decode_condition(cv, 4), DomainError);
}

TEST_CASE("filter_targets") {
  std::vector<ActionInstance> five;
  for (int i = 1; i <= 5; ++i) five.push_back(inst(i, 10 * i, 10 * i + 5));
  SUBCASE("ordinal two to four") {
    const auto f = filter_targets(five, Condition{0, OrdinalRange{2, 4}, std::nullopt});
    REQUIRE(f.size() == 3u);
    CHECK(f[0].ordinal == 2);
    CHECK(f[2].ordinal == 4);
  }
  SUBCASE("no condition") { CHECK(filter_targets(five, Condition{}) == five); }
  SUBCASE("scale S") {
    const std::vector<ActionInstance> three{inst(1, 0, 10), inst(2, 20, 50), inst(3, 10, 90)};
    const auto f = filter_targets(three, Condition{0, std::nullopt, ScaleBucket::S});
    REQUIRE(f.size() == 1u);
    CHECK(f[0].r == doctest::Approx(0.3));
  }
}

TEST_CASE("sample_condition") {
  synthesis::SynthesizedSample s;
  s.target_category = 2;
  for (int i = 1; i <= 4; ++i) s.instances.push_back(inst(i, 20 * i, 20 * i + 3 * i));
  Rng rng = make_rng(1, 0);

  SUBCASE("p_cond 0 never conditions") {
    for (int i = 0; i < 500; ++i) {
      const auto c = sample_condition(s, ConditionSampling{0.0, false}, rng);
      CHECK_FALSE(c.conditioned());
      CHECK(c.target_category == 2);
    }
  }
  SUBCASE("single instance forces [1,1]") {
    synthesis::SynthesizedSample one = s;
    one.instances.resize(1);
    for (int i = 0; i < 200; ++i) {
      const auto c = sample_condition(one, ConditionSampling{1.0, false}, rng);
      CHECK(c.conditioned());
      if (c.ordinal) CHECK(*c.ordinal == OrdinalRange{1, 1});
    }
  }
  SUBCASE("enabled fraction near p_cond and conditions are exclusive") {
    int enabled = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto c = sample_condition(s, ConditionSampling{0.5, false}, rng);
      if (c.conditioned()) ++enabled;
      CHECK_FALSE((c.ordinal && c.scale));
      CHECK_FALSE(filter_targets(s.instances, c).empty());
      const auto cv = encode_condition(c, 3, 12);
      CHECK(valid_condition_vector(cv, 12));
    }
    CHECK(std::abs(enabled - n / 2) < 3 * std::sqrt(n * 0.25));
  }
  SUBCASE("joint conditions keep a nonempty target set") {
    bool saw_joint = false;
    for (int i = 0; i < 2000; ++i) {
      const auto c = sample_condition(s, ConditionSampling{1.0, true}, rng);
      saw_joint = saw_joint || (c.ordinal && c.scale);
      CHECK_FALSE(filter_targets(s.instances, c).empty());
    }
    CHECK(saw_joint);
  }
  SUBCASE("empty sample") {
    synthesis::SynthesizedSample none;
    CHECK_THROWS_AS(sample_condition(none, ConditionSampling{}, rng), DomainError);
  }
}

TEST_CASE("condition_queries adds one projected row to every query") {
  nn::ParameterSet ps;
  Rng rng = make_rng(3, 3);
  const auto enc = nn::TaskEncoder::create(ps, "e", static_cast<std::size_t>(condition_width(3, 4)), 6, rng);
  const auto cv = encode_condition(Condition{1, OrdinalRange{2, 3}, std::nullopt}, 3, 4);

  SUBCASE("zero queries give E(z) on every row") {
    const auto q = nn::Tensor::zeros(5, 6);
    const auto out = condition_queries(q, cv, enc);
    const auto z = cv.concatenated();
    const auto e = enc.forward(nn::Tensor::constant(1, z.size(), z));
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 6; ++j) CHECK(out.at(i, j) == e.at(0, j));
    }
  }
  SUBCASE("zero encoder is the identity") {
    for (auto& [name, t] : ps.items()) {
      for (double& v : nn::Tensor(t).mutable_value()) v = 0.0;
    }
    std::vector<double> vals(30);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * static_cast<double>(i);
    const auto q = nn::Tensor::constant(5, 6, vals);
    const auto out = condition_queries(q, cv, enc);
    for (std::size_t i = 0; i < 30; ++i) CHECK(out.value()[i] == vals[i]);
  }
  SUBCASE("width mismatch") {
    const auto bad = encode_condition(Condition{1}, 4, 4);
    CHECK_THROWS_AS(condition_queries(nn::Tensor::zeros(5, 6), bad, enc), ShapeError);
  }
}

TEST_CASE("condition json") {
  const Condition c{4, OrdinalRange{2, 3}, std::nullopt};
  CHECK(condition_from_json(condition_to_json(c), 4) == c);
  const Condition s{1, std::nullopt, ScaleBucket::XL};
  CHECK(condition_from_json(condition_to_json(s), 1) == s);
  CHECK(condition_to_json(Condition{}).dump() == R"({"ordinal":null,"scale":null})");
}
