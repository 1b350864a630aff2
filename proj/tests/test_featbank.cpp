#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ltp/featbank.hpp"

using namespace ltp;
using namespace ltp::featbank;

namespace {

BankConfig small_config() {
  BankConfig c;
  c.num_categories = 6;
  c.feature_dim = 16;
  c.clips_per_category = 5;
  c.seed = 11;
  return c;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ltp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config validation") {
  BankConfig c = small_config();
  c.clip_len_min = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.clip_len_max = c.clip_len_min - 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.num_categories = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.prototype_noise = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rows are unit norm and lengths within range") {
  const auto bank = generate_bank(small_config());
  for (int k = 0; k < bank.num_categories(); ++k) {
    for (const auto& clip : bank.clips(k)) {
      CHECK(clip.category == k);
      CHECK(clip.length() >= bank.config().clip_len_min);
      CHECK(clip.length() <= bank.config().clip_len_max);
      for (std::size_t t = 0; t < clip.features.rows; ++t) {
        double n = 0;
        for (float v : clip.features.row(t)) n += double(v) * v;
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("noise free bank repeats the normalized prototype") {
  BankConfig c = small_config();
  c.prototype_noise = 0.0;
  c.drift_amplitude = 0.0;
  const auto bank = generate_bank(c);
  for (int k = 0; k < bank.num_categories(); ++k) {
    auto proto = bank.prototypes().row(static_cast<std::size_t>(k));
    double n = 0;
    for (float v : proto) n += double(v) * v;
    n = std::sqrt(n);
    for (const auto& clip : bank.clips(k)) {
      for (std::size_t t = 0; t < clip.features.rows; ++t) {
        auto row = clip.features.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) CHECK(row[j] == doctest::Approx(proto[j] / n).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("generation is deterministic") {
  CHECK(generate_bank(small_config()) == generate_bank(small_config()));
  BankConfig other = small_config();
  other.seed = 12;
  CHECK_FALSE(generate_bank(small_config()) == generate_bank(other));
}

TEST_CASE("categories are separable on the default bank") {
  const auto bank = generate_bank(BankConfig{});
  // Brute force over clip pairs using clip-mean features.
  std::vector<std::pair<int, std::vector<float>>> means;
  for (int k = 0; k < bank.num_categories(); ++k) {
    for (const auto& clip : bank.clips(k)) {
      std::vector<float> m(clip.features.cols, 0.0f);
      for (std::size_t t = 0; t < clip.features.rows; ++t) {
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += clip.features(t, j);
      }
      means.emplace_back(k, std::move(m));
    }
  }
  double within = 0, across = 0;
  long nw = 0, na = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      const double c = cosine(means[i].second, means[j].second);
      if (means[i].first == means[j].first) {
        within += c;
        ++nw;
      } else {
        across += c;
        ++na;
      }
    }
  }
  CHECK(within / nw > across / na);
}

TEST_CASE("sample_clip") {
  BankConfig c = small_config();
  c.clips_per_category = 1;
  const auto bank = generate_bank(c);
  Rng rng = make_rng(1, 2);
  CHECK(sample_clip(bank, 3, rng) == bank.clips(3)[0]);
  CHECK_THROWS_AS(sample_clip(bank, 999, rng), LookupError);
  CHECK_THROWS_AS(sample_clip(bank, -1, rng), LookupError);
}

TEST_CASE("sample_clip is uniform over a category's clips") {
  BankConfig c = small_config();
  c.num_categories = 4;
  c.clips_per_category = 8;
  const auto bank = generate_bank(c);
  Rng rng = make_rng(5, 0);
  std::map<const ClipFeatures*, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[&sample_clip(bank, i % 4, rng)];
  CHECK(counts.size() == 32u);
  // Chi-square with 31 degrees of freedom; 3 sigma above the mean is ~55.
  const double expected = draws / 32.0;
  double chi2 = 0;
  for (const auto& [clip, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  CHECK(chi2 < 31 + 3 * std::sqrt(62.0));
}

TEST_CASE("slice_categories renumbers") {
  const auto bank = generate_bank(small_config());
  const auto s = bank.slice_categories(2, 3);
  CHECK(s.num_categories() == 3);
  CHECK(s.clips(0)[0].features == bank.clips(2)[0].features);
  CHECK(s.clips(2)[0].category == 2);
}

TEST_CASE("save and load round trip") {
  const auto dir = temp_dir("bank_rt");
  const auto bank = generate_bank(small_config());
  save_bank(bank, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(load_bank(dir) == bank);

  const auto again = temp_dir("bank_rt2");
  save_bank(generate_bank(small_config()), again);
  CHECK(read_file(dir / "clips.bin") == read_file(again / "clips.bin"));
  CHECK(read_file(dir / "manifest.json") == read_file(again / "manifest.json"));
}

TEST_CASE("malformed bank files") {
  const auto dir = temp_dir("bank_bad");
  const auto bank = generate_bank(small_config());
  save_bank(bank, dir);
  SUBCASE("truncated payload") {
    auto bytes = read_file(dir / "clips.bin");
    bytes.resize(bytes.size() / 2);
    write_file_atomic(dir / "clips.bin", bytes);
    CHECK_THROWS_AS(load_bank(dir), FormatError);
  }
  SUBCASE("empty manifest") {
    write_text_atomic(dir / "manifest.json", "");
    CHECK_THROWS_AS(load_bank(dir), FormatError);
  }
  SUBCASE("declared D disagrees with payload") {
    BankConfig c = small_config();
    c.feature_dim = 8;
    const auto narrow = temp_dir("bank_narrow");
    save_bank(generate_bank(c), narrow);
    std::filesystem::copy_file(narrow / "clips.bin", dir / "clips.bin",
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_AS(load_bank(dir), FormatError);
  }
  SUBCASE("missing directory") { CHECK_THROWS_AS(load_bank(dir / "nope"), Error); }
}
