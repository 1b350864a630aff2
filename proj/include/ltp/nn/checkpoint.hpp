#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "ltp/nn/layers.hpp"
#include "ltp/nn/model.hpp"

namespace ltp::nn {

// On disk: checkpoint.json (metadata plus a tensor index of name, shape, dtype
// "f64le" and byte offset) and weights.bin (row-major binary64 little-endian).
struct TensorFile {
  StateDict tensors;
  nlohmann::json meta = nlohmann::json::object();
};

void save_tensor_file(const std::filesystem::path& dir, const TensorFile& file);
TensorFile load_tensor_file(const std::filesystem::path& dir);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Attention dumps: attention.bin (binary32 matrices back to back) and
// attention_index.json listing {video, component, layer, rows, cols,
// byte_offset} per matrix.
struct AttentionRecord {
  int video = 0;
  std::string component;  // encoder-self | decoder-self | decoder-cross
  int layer = 0;
  MatrixD map;
};

std::vector<AttentionRecord> trace_records(int video, const AttentionTrace& trace);
void save_attention_dump(const std::filesystem::path& dir, const std::vector<AttentionRecord>& records);
std::vector<AttentionRecord> load_attention_dump(const std::filesystem::path& dir);

}  // namespace ltp::nn
