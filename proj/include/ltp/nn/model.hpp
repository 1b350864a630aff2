#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltp/common.hpp"
#include "ltp/nn/layers.hpp"
#include "ltp/nn/tensor.hpp"

namespace ltp::nn {

struct ModelConfig {
  int feature_dim = 64;  // input D
  int hidden_dim = 64;   // d
  int num_queries = 16;  // M
  int encoder_layers = 2;
  int decoder_layers = 4;
  int heads = 4;
  int ffn_dim = 128;
  int num_classes = 1;     // foreground classes; background is appended last
  int task_input_dim = 0;  // 0 disables the task encoder
  std::uint64_t init_seed = 0;

  // Desk-scale defaults (above) and the published architecture size.
  static ModelConfig desk();
  static ModelConfig paper();
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Head-averaged attention maps captured during a forward pass, one per layer.
struct AttentionTrace {
  std::vector<MatrixD> encoder_self;
  std::vector<MatrixD> decoder_self;
  std::vector<MatrixD> decoder_cross;
};

// M predictions: class probabilities (M x (num_classes + 1), background last)
// and normalized intervals (M x 2, columns center and width, both in (0, 1)).
struct DetectionSet {
  Tensor class_probs;
  Tensor boxes;

  std::size_t size() const { return class_probs.rows(); }
  std::size_t num_classes() const { return class_probs.cols() - 1; }
};

// Encoder-decoder set-prediction transformer over a temporal feature sequence.
// Residual blocks are pre-norm: x + f(LN(x)).
class DetectionTransformer {
 public:
  explicit DetectionTransformer(const ModelConfig& config);
  DetectionTransformer(const DetectionTransformer&) = delete;
  DetectionTransformer& operator=(const DetectionTransformer&) = delete;
  DetectionTransformer(DetectionTransformer&&) = default;
  DetectionTransformer& operator=(DetectionTransformer&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  // Learned action queries, M x d.
  Tensor queries() const { return queries_; }
  bool has_task_encoder() const { return config_.task_input_dim > 0; }
  const TaskEncoder& task_encoder() const;

  // Input projection D -> d, layer norm, plus sinusoidal positions.
  Tensor embed(const FeatureMatrix& features) const;
  Tensor input_projection(const Tensor& features) const { return input_norm_.forward(input_proj_.forward(features)); }

  Tensor encode(const FeatureMatrix& features, AttentionTrace* trace) const;
  // Encoder over an already projected sequence with explicit positions.
  Tensor encode_projected(const Tensor& projected, const Tensor& positions, AttentionTrace* trace) const;
  // Decoder states after the final layer norm, M x d.
  Tensor decode(const Tensor& memory, const Tensor& queries, AttentionTrace* trace) const;
  // States after every decoder layer, each passed through the final layer norm.
  std::vector<Tensor> decode_layers(const Tensor& memory, const Tensor& queries, AttentionTrace* trace) const;
  DetectionSet predict_heads(const Tensor& states) const;

  DetectionSet forward(const FeatureMatrix& features, const Tensor& queries, AttentionTrace* trace) const;
  // One prediction set per decoder layer; the last equals forward().
  std::vector<DetectionSet> forward_layers(const FeatureMatrix& features, const Tensor& queries) const;

 private:
  struct EncoderLayer {
    LayerNorm norm1, norm2;
    MultiHeadAttention self_attn;
    FeedForward ffn;
  };
  struct DecoderLayer {
    LayerNorm norm1, norm2, norm3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
  };

  ModelConfig config_;
  ParameterSet params_;
  Linear input_proj_;
  LayerNorm input_norm_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  LayerNorm decoder_norm_;
  Tensor queries_;
  Linear class_head_;
  Linear box_fc1_, box_fc2_, box_fc3_;
  TaskEncoder task_encoder_;
};

// Parameter names belonging to the classification head and task encoder.
bool is_class_head_parameter(const std::string& name);
bool is_task_encoder_parameter(const std::string& name);

}  // namespace ltp::nn
