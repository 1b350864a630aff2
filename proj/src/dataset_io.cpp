#include "ltp/dataset_io.hpp"

#include <sstream>

#include "binio.hpp"

namespace ltp::dataset_io {

using nlohmann::json;

namespace {

json span_json(const Span& s) { return json::array({s.start, s.end}); }
Span span_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

json parse_text(const std::vector<char>& text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError("malformed " + what + ": " + e.what(), e.byte);
  }
}

std::vector<json> parse_lines(const std::vector<char>& text) {
  std::vector<json> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      if (i > begin) {
        try {
          out.push_back(json::parse(text.begin() + static_cast<std::ptrdiff_t>(begin),
                                    text.begin() + static_cast<std::ptrdiff_t>(i)));
        } catch (const json::parse_error& e) {
          throw FormatError(std::string("malformed labels.jsonl: ") + e.what(), begin + e.byte);
        }
      }
      begin = i + 1;
    }
  }
  return out;
}

void append_rows(std::vector<char>& payload, const FeatureMatrix& f) { binio::append_f32(payload, f.data); }

FeatureMatrix read_rows(const std::vector<char>& payload, std::uint64_t offset, std::size_t rows, std::size_t cols) {
  FeatureMatrix f(rows, cols);
  f.data = binio::read_array<float>(payload, offset, rows * cols);
  return f;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<char>& payload, const std::string& labels,
                   const json& manifest) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "samples.bin", payload);
  write_text_atomic(dir / "labels.jsonl", labels);
  write_text_atomic(dir / "dataset_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

void save_pretext(const std::filesystem::path& dir, const PretextDataset& ds) {
  if (ds.samples.size() != ds.conditions.size()) throw ShapeError("one condition per sample required");
  std::vector<char> payload;
  std::string labels;
  std::size_t dim = ds.samples.empty() ? 0 : ds.samples.front().features.cols;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.features.cols != dim) throw ShapeError("samples differ in feature dimension");
    json inst = json::array();
    for (const auto& a : s.instances) {
      inst.push_back({{"category", a.category}, {"interval", span_json(a.interval)}, {"ordinal", a.ordinal}, {"r", a.r}});
    }
    json bg = json::array();
    for (const auto& b : s.background_spans) bg.push_back({{"category", b.category}, {"interval", span_json(b.interval)}});
    json rec = {{"index", i},
                {"byte_offset", payload.size()},
                {"length", s.features.rows},
                {"target_category", s.target_category},
                {"instances", inst},
                {"background_spans", bg},
                {"condition", pretext::condition_to_json(ds.conditions[i])}};
    labels += rec.dump() + "\n";
    append_rows(payload, s.features);
  }
  json manifest = {{"kind", "pretext"}, {"count", ds.samples.size()}, {"feature_dim", dim}, {"dtype", "f32le"},
                   {"meta", ds.meta}};
  write_dataset(dir, payload, labels, manifest);
}

PretextDataset load_pretext(const std::filesystem::path& dir) {
  const json manifest = parse_text(read_file(dir / "dataset_manifest.json"), "dataset_manifest.json");
  const auto payload = read_file(dir / "samples.bin");
  PretextDataset ds;
  try {
    if (manifest.at("kind") != "pretext") throw FormatError("not a pretext dataset", 0);
    const auto dim = manifest.at("feature_dim").get<std::size_t>();
    ds.meta = manifest.at("meta");
    std::uint64_t expected = 0;
    for (const auto& rec : parse_lines(read_file(dir / "labels.jsonl"))) {
      synthesis::SynthesizedSample s;
      const auto rows = rec.at("length").get<std::size_t>();
      const auto off = rec.at("byte_offset").get<std::uint64_t>();
      if (off != expected) throw FormatError("sample out of sequence", expected);
      s.features = read_rows(payload, off, rows, dim);
      expected += rows * dim * sizeof(float);
      s.target_category = rec.at("target_category").get<int>();
      for (const auto& a : rec.at("instances")) {
        s.instances.push_back({a.at("category").get<int>(), span_from(a.at("interval")), a.at("ordinal").get<int>(),
                               a.at("r").get<double>()});
      }
      for (const auto& b : rec.at("background_spans")) {
        s.background_spans.push_back({b.at("category").get<int>(), span_from(b.at("interval"))});
      }
      ds.conditions.push_back(pretext::condition_from_json(rec.at("condition"), s.target_category));
      ds.samples.push_back(std::move(s));
    }
    if (expected != payload.size()) throw FormatError("samples.bin has trailing bytes", expected);
    if (ds.samples.size() != manifest.at("count").get<std::size_t>()) {
      throw FormatError("labels.jsonl count differs from manifest", 0);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed pretext dataset: ") + e.what(), 0);
  }
  return ds;
}

void save_detection(const std::filesystem::path& dir, const downstream::DetectionDataset& ds, const json& meta) {
  std::vector<char> payload;
  std::string labels;
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const auto& v = ds.videos[i];
    if (v.features.cols != static_cast<std::size_t>(ds.feature_dim)) throw ShapeError("video feature dim mismatch");
    json inst = json::array();
    for (const auto& a : v.instances) inst.push_back({{"category", a.category}, {"interval", span_json(a.interval)}});
    labels += json{{"video_id", i}, {"byte_offset", payload.size()}, {"length", v.features.rows}, {"instances", inst}}
                  .dump() +
              "\n";
    append_rows(payload, v.features);
  }
  json manifest = {{"kind", "detection"},         {"count", ds.videos.size()}, {"feature_dim", ds.feature_dim},
                   {"num_classes", ds.num_classes}, {"video_len", ds.video_len}, {"dtype", "f32le"},
                   {"meta", meta}};
  write_dataset(dir, payload, labels, manifest);
}

downstream::DetectionDataset load_detection(const std::filesystem::path& dir, json* meta) {
  const json manifest = parse_text(read_file(dir / "dataset_manifest.json"), "dataset_manifest.json");
  const auto payload = read_file(dir / "samples.bin");
  downstream::DetectionDataset ds;
  try {
    if (manifest.at("kind") != "detection") throw FormatError("not a detection dataset", 0);
    ds.feature_dim = manifest.at("feature_dim").get<int>();
    ds.num_classes = manifest.at("num_classes").get<int>();
    ds.video_len = manifest.at("video_len").get<int>();
    if (meta) *meta = manifest.at("meta");
    std::uint64_t expected = 0;
    for (const auto& rec : parse_lines(read_file(dir / "labels.jsonl"))) {
      downstream::Video v;
      const auto rows = rec.at("length").get<std::size_t>();
      const auto off = rec.at("byte_offset").get<std::uint64_t>();
      if (off != expected) throw FormatError("video out of sequence", expected);
      v.features = read_rows(payload, off, rows, static_cast<std::size_t>(ds.feature_dim));
      expected += rows * static_cast<std::size_t>(ds.feature_dim) * sizeof(float);
      for (const auto& a : rec.at("instances")) {
        synthesis::ActionInstance inst;
        inst.category = a.at("category").get<int>();
        inst.interval = span_from(a.at("interval"));
        inst.ordinal = static_cast<int>(v.instances.size()) + 1;
        inst.r = static_cast<double>(inst.interval.length()) / static_cast<double>(rows);
        v.instances.push_back(inst);
      }
      ds.videos.push_back(std::move(v));
    }
    if (expected != payload.size()) throw FormatError("samples.bin has trailing bytes", expected);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed detection dataset: ") + e.what(), 0);
  }
  return ds;
}

}  // namespace ltp::dataset_io
