#include "ltp/nn/checkpoint.hpp"

#include "../binio.hpp"

namespace ltp::nn {

using nlohmann::json;

void save_tensor_file(const std::filesystem::path& dir, const TensorFile& file) {
  std::filesystem::create_directories(dir);
  std::vector<char> payload;
  json index = json::array();
  for (const auto& [name, arr] : file.tensors) {
    if (arr.values.size() != arr.rows * arr.cols) throw ShapeError("tensor " + name + " has inconsistent shape");
    index.push_back({{"name", name},
                     {"shape", {arr.rows, arr.cols}},
                     {"dtype", "f64le"},
                     {"byte_offset", payload.size()}});
    binio::append_f64(payload, arr.values);
  }
  json header = {{"tensors", index}, {"meta", file.meta}};
  write_file_atomic(dir / "weights.bin", payload);
  write_text_atomic(dir / "checkpoint.json", header.dump(1) + "\n");
}

TensorFile load_tensor_file(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "checkpoint.json")) {
    throw CheckpointError("no checkpoint at " + dir.string());
  }
  const auto text = read_file(dir / "checkpoint.json");
  json header;
  try {
    header = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed checkpoint.json: ") + e.what(), e.byte);
  }
  const auto payload = read_file(dir / "weights.bin");
  TensorFile out;
  try {
    out.meta = header.at("meta");
    std::uint64_t expected = 0;
    for (const auto& rec : header.at("tensors")) {
      const auto name = rec.at("name").get<std::string>();
      if (rec.at("dtype").get<std::string>() != "f64le") throw FormatError("unsupported dtype for " + name, 0);
      const auto rows = rec.at("shape").at(0).get<std::size_t>();
      const auto cols = rec.at("shape").at(1).get<std::size_t>();
      const auto off = rec.at("byte_offset").get<std::uint64_t>();
      if (off != expected) throw FormatError("tensor " + name + " out of sequence", expected);
      NamedArray arr{rows, cols, binio::read_array<double>(payload, off, rows * cols)};
      expected += rows * cols * sizeof(double);
      out.tensors.emplace(name, std::move(arr));
    }
    if (expected != payload.size()) throw FormatError("weights.bin size does not match index", expected);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint.json: ") + e.what(), 0);
  }
  return out;
}

json model_config_to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},     {"hidden_dim", c.hidden_dim},
          {"num_queries", c.num_queries},     {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}, {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},             {"num_classes", c.num_classes},
          {"task_input_dim", c.task_input_dim}, {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.num_queries = j.at("num_queries").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.task_input_dim = j.at("task_input_dim").get<int>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

std::vector<AttentionRecord> trace_records(int video, const AttentionTrace& trace) {
  std::vector<AttentionRecord> out;
  auto push = [&](const std::vector<MatrixD>& maps, const char* component) {
    for (std::size_t i = 0; i < maps.size(); ++i) out.push_back({video, component, static_cast<int>(i), maps[i]});
  };
  push(trace.encoder_self, "encoder-self");
  push(trace.decoder_self, "decoder-self");
  push(trace.decoder_cross, "decoder-cross");
  return out;
}

void save_attention_dump(const std::filesystem::path& dir, const std::vector<AttentionRecord>& records) {
  std::filesystem::create_directories(dir);
  std::vector<char> payload;
  json index = json::array();
  for (const auto& r : records) {
    index.push_back({{"video", r.video},
                     {"component", r.component},
                     {"layer", r.layer},
                     {"rows", r.map.rows},
                     {"cols", r.map.cols},
                     {"byte_offset", payload.size()}});
    std::vector<float> f(r.map.data.begin(), r.map.data.end());
    binio::append_f32(payload, f);
  }
  write_file_atomic(dir / "attention.bin", payload);
  write_text_atomic(dir / "attention_index.json", json({{"dtype", "f32le"}, {"maps", index}}).dump(1) + "\n");
}

std::vector<AttentionRecord> load_attention_dump(const std::filesystem::path& dir) {
  const auto text = read_file(dir / "attention_index.json");
  json index;
  try {
    index = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed attention_index.json: ") + e.what(), e.byte);
  }
  const auto payload = read_file(dir / "attention.bin");
  std::vector<AttentionRecord> out;
  try {
    for (const auto& rec : index.at("maps")) {
      AttentionRecord r;
      r.video = rec.at("video").get<int>();
      r.component = rec.at("component").get<std::string>();
      r.layer = rec.at("layer").get<int>();
      const auto rows = rec.at("rows").get<std::size_t>();
      const auto cols = rec.at("cols").get<std::size_t>();
      const auto f = binio::read_array<float>(payload, rec.at("byte_offset").get<std::uint64_t>(), rows * cols);
      r.map = MatrixD(rows, cols);
      std::copy(f.begin(), f.end(), r.map.data.begin());
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed attention_index.json: ") + e.what(), 0);
  }
  return out;
}

}  // namespace ltp::nn
