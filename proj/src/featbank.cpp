#include "ltp/featbank.hpp"

#include <cmath>
#include <numeric>

#include "binio.hpp"
#include "json.hpp"

namespace ltp::featbank {

using nlohmann::json;

void BankConfig::validate() const {
  if (num_categories < 2) throw ConfigError("num_categories must be >= 2");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (clips_per_category < 1) throw ConfigError("clips_per_category must be positive");
  if (clip_len_min < 2) throw ConfigError("clip_len_range lower bound must be >= 2");
  if (clip_len_max < clip_len_min) throw ConfigError("clip_len_range upper bound below lower bound");
  if (!(prototype_noise >= 0.0) || !(drift_amplitude >= 0.0)) {
    throw ConfigError("prototype_noise and drift_amplitude must be nonnegative");
  }
}

FeatureBank::FeatureBank(BankConfig config, std::vector<std::vector<ClipFeatures>> clips,
                         FeatureMatrix prototypes)
    : config_(config), clips_(std::move(clips)), prototypes_(std::move(prototypes)) {
  if (static_cast<int>(clips_.size()) != config_.num_categories) {
    throw ConfigError("clip lists do not match num_categories");
  }
  for (std::size_t k = 0; k < clips_.size(); ++k) {
    if (clips_[k].empty()) throw ConfigError("category " + std::to_string(k) + " has no clips");
    for (const auto& clip : clips_[k]) {
      if (clip.category != static_cast<int>(k)) throw ConfigError("clip filed under the wrong category");
    }
  }
}

const std::vector<ClipFeatures>& FeatureBank::clips(int category) const {
  if (category < 0 || category >= num_categories()) {
    throw LookupError("unknown category " + std::to_string(category));
  }
  return clips_[static_cast<std::size_t>(category)];
}

std::size_t FeatureBank::total_clips() const {
  std::size_t n = 0;
  for (const auto& c : clips_) n += c.size();
  return n;
}

FeatureBank FeatureBank::slice_categories(int first, int count) const {
  if (first < 0 || count < 1 || first + count > num_categories()) {
    throw LookupError("category slice out of range");
  }
  BankConfig cfg = config_;
  cfg.num_categories = count;
  std::vector<std::vector<ClipFeatures>> clips;
  FeatureMatrix protos(static_cast<std::size_t>(count), prototypes_.cols);
  for (int k = 0; k < count; ++k) {
    auto list = clips_[static_cast<std::size_t>(first + k)];
    for (auto& clip : list) clip.category = k;
    clips.push_back(std::move(list));
    auto src = prototypes_.row(static_cast<std::size_t>(first + k));
    std::copy(src.begin(), src.end(), protos.row(static_cast<std::size_t>(k)).begin());
  }
  return FeatureBank(cfg, std::move(clips), std::move(protos));
}

namespace {

void normalize_row(std::span<const double> in, std::span<float> out) {
  double norm = 0.0;
  for (double v : in) norm += v * v;
  norm = std::sqrt(norm);
  const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(in[i] * inv);
}

ClipFeatures generate_clip(const BankConfig& cfg, std::span<const double> prototype, int category,
                           std::uint64_t stream) {
  Rng rng = make_rng(cfg.seed, stream);
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const int len = uniform_int(rng, cfg.clip_len_min, cfg.clip_len_max);
  const auto t_len = static_cast<std::size_t>(len);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Cumulative random walk, then a centered 3-tap average (2 taps at the ends).
  std::vector<double> walk(t_len * d);
  std::vector<double> pos(d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      pos[j] += normal(rng);
      walk[t * d + j] = pos[j];
    }
  }
  std::vector<double> drift(t_len * d);
  for (std::size_t t = 0; t < t_len; ++t) {
    const std::size_t lo = t == 0 ? 0 : t - 1;
    const std::size_t hi = std::min(t + 1, t_len - 1);
    const double taps = static_cast<double>(hi - lo + 1);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t u = lo; u <= hi; ++u) s += walk[u * d + j];
      drift[t * d + j] = s / taps;
    }
  }

  ClipFeatures clip{category, FeatureMatrix(t_len, d)};
  std::vector<double> row(d);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double eps = normal(rng);
      row[j] = prototype[j] + cfg.drift_amplitude * drift[t * d + j] + cfg.prototype_noise * eps;
    }
    normalize_row(row, clip.features.row(t));
  }
  return clip;
}

}  // namespace

FeatureBank generate_bank(const BankConfig& config) {
  config.validate();
  const auto k_count = static_cast<std::size_t>(config.num_categories);
  const auto d = static_cast<std::size_t>(config.feature_dim);

  Rng proto_rng = make_rng(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> protos(k_count * d);
  for (double& v : protos) v = normal(proto_rng);

  FeatureMatrix proto_out(k_count, d);
  std::vector<std::vector<ClipFeatures>> clips(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::span<const double> p(protos.data() + k * d, d);
    for (int c = 0; c < config.clips_per_category; ++c) {
      const std::uint64_t stream = 1 + k * static_cast<std::uint64_t>(config.clips_per_category) +
                                   static_cast<std::uint64_t>(c);
      clips[k].push_back(generate_clip(config, p, static_cast<int>(k), stream));
    }
    for (std::size_t j = 0; j < d; ++j) proto_out(k, j) = static_cast<float>(p[j]);
  }
  return FeatureBank(config, std::move(clips), std::move(proto_out));
}

const ClipFeatures& sample_clip(const FeatureBank& bank, int category, Rng& rng) {
  const auto& list = bank.clips(category);
  const int idx = uniform_int(rng, 0, static_cast<int>(list.size()) - 1);
  return list[static_cast<std::size_t>(idx)];
}

// ---------------------------------------------------------------------------

json config_to_json(const BankConfig& c) {
  return {{"num_categories", c.num_categories},
          {"feature_dim", c.feature_dim},
          {"clips_per_category", c.clips_per_category},
          {"clip_len_range", {c.clip_len_min, c.clip_len_max}},
          {"prototype_noise", c.prototype_noise},
          {"drift_amplitude", c.drift_amplitude},
          {"seed", c.seed}};
}

BankConfig config_from_json(const json& j) {
  BankConfig c;
  c.num_categories = j.at("num_categories").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.clips_per_category = j.at("clips_per_category").get<int>();
  c.clip_len_min = j.at("clip_len_range").at(0).get<int>();
  c.clip_len_max = j.at("clip_len_range").at(1).get<int>();
  c.prototype_noise = j.at("prototype_noise").get<double>();
  c.drift_amplitude = j.at("drift_amplitude").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_bank(const FeatureBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<char> payload;
  json records = json::array();
  for (int k = 0; k < bank.num_categories(); ++k) {
    for (const auto& clip : bank.clips(k)) {
      records.push_back({{"category", clip.category},
                         {"length", clip.length()},
                         {"byte_offset", payload.size()}});
      binio::append_f32(payload, clip.features.data);
    }
  }
  json protos = json::array();
  for (std::size_t k = 0; k < bank.prototypes().rows; ++k) {
    auto r = bank.prototypes().row(k);
    protos.push_back(std::vector<float>(r.begin(), r.end()));
  }
  json manifest = {{"num_categories", bank.num_categories()},
                   {"D", bank.feature_dim()},
                   {"dtype", "f32le"},
                   {"config", config_to_json(bank.config())},
                   {"prototypes", protos},
                   {"clips", records}};
  write_file_atomic(dir / "clips.bin", payload);
  write_text_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

FeatureBank load_bank(const std::filesystem::path& dir) {
  const auto text = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed manifest.json: ") + e.what(), e.byte);
  }
  const auto payload = read_file(dir / "clips.bin");

  try {
    if (manifest.at("dtype").get<std::string>() != "f32le") {
      throw FormatError("unsupported dtype " + manifest.at("dtype").get<std::string>(), 0);
    }
    BankConfig cfg = config_from_json(manifest.at("config"));
    const int num_categories = manifest.at("num_categories").get<int>();
    const int d = manifest.at("D").get<int>();
    if (num_categories != cfg.num_categories || d != cfg.feature_dim || d < 1) {
      throw FormatError("header dimensions disagree with config", 0);
    }
    const auto du = static_cast<std::size_t>(d);

    std::vector<std::vector<ClipFeatures>> clips(static_cast<std::size_t>(num_categories));
    std::uint64_t expected_offset = 0;
    for (const auto& rec : manifest.at("clips")) {
      const int cat = rec.at("category").get<int>();
      const int len = rec.at("length").get<int>();
      const auto off = rec.at("byte_offset").get<std::uint64_t>();
      if (cat < 0 || cat >= num_categories) throw FormatError("clip category out of range", off);
      if (len < 1) throw FormatError("clip length must be positive", off);
      if (off != expected_offset) throw FormatError("clip byte_offset out of sequence", expected_offset);
      ClipFeatures clip{cat, FeatureMatrix(static_cast<std::size_t>(len), du)};
      clip.features.data = binio::read_array<float>(payload, off, clip.features.data.size());
      expected_offset += clip.features.data.size() * sizeof(float);
      clips[static_cast<std::size_t>(cat)].push_back(std::move(clip));
    }
    if (expected_offset != payload.size()) {
      throw FormatError("clips.bin has " + std::to_string(payload.size() - expected_offset) +
                            " trailing bytes; payload does not match declared dimensions",
                        expected_offset);
    }

    const auto& protos = manifest.at("prototypes");
    FeatureMatrix proto_out(static_cast<std::size_t>(num_categories), du);
    if (protos.size() != proto_out.rows) throw FormatError("prototype count mismatch", 0);
    for (std::size_t k = 0; k < proto_out.rows; ++k) {
      const auto row = protos.at(k).get<std::vector<float>>();
      if (row.size() != du) throw FormatError("prototype dimension mismatch", 0);
      std::copy(row.begin(), row.end(), proto_out.row(k).begin());
    }
    return FeatureBank(cfg, std::move(clips), std::move(proto_out));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest.json: ") + e.what(), 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent bank: ") + e.what(), 0);
  }
}

}  // namespace ltp::featbank
