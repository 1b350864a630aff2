#include "ltp/nn/model.hpp"

namespace ltp::nn {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.hidden_dim = 256;
  c.num_queries = 40;
  c.encoder_layers = 2;
  c.decoder_layers = 4;
  c.heads = 8;
  c.ffn_dim = 1024;
  return c;
}

void ModelConfig::validate() const {
  if (feature_dim < 1 || hidden_dim < 1 || num_queries < 1 || ffn_dim < 1 || num_classes < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("need at least one encoder and decoder layer");
  if (heads < 1 || hidden_dim % heads != 0) throw ConfigError("hidden_dim must be divisible by heads");
  if (task_input_dim < 0) throw ConfigError("task_input_dim must be nonnegative");
}

bool is_class_head_parameter(const std::string& name) { return name.rfind("class_head.", 0) == 0; }
bool is_task_encoder_parameter(const std::string& name) { return name.rfind("task_encoder.", 0) == 0; }

DetectionTransformer::DetectionTransformer(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.init_seed, 0xD37Eull);
  const auto d = static_cast<std::size_t>(config_.hidden_dim);
  const auto ffn = static_cast<std::size_t>(config_.ffn_dim);
  const auto heads = static_cast<std::size_t>(config_.heads);

  input_proj_ = Linear::create(params_, "input_proj", static_cast<std::size_t>(config_.feature_dim), d, rng);
  // Unit-norm features project to entries far below the unit-amplitude
  // positions; normalizing keeps content from being swamped.
  input_norm_ = LayerNorm::create(params_, "input_norm", d);
  for (int i = 0; i < config_.encoder_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncoderLayer layer;
    layer.norm1 = LayerNorm::create(params_, p + ".norm1", d);
    layer.self_attn = MultiHeadAttention::create(params_, p + ".self_attn", d, heads, rng);
    layer.norm2 = LayerNorm::create(params_, p + ".norm2", d);
    layer.ffn = FeedForward::create(params_, p + ".ffn", d, ffn, rng);
    encoder_.push_back(std::move(layer));
  }
  for (int i = 0; i < config_.decoder_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecoderLayer layer;
    layer.norm1 = LayerNorm::create(params_, p + ".norm1", d);
    layer.self_attn = MultiHeadAttention::create(params_, p + ".self_attn", d, heads, rng);
    layer.norm2 = LayerNorm::create(params_, p + ".norm2", d);
    layer.cross_attn = MultiHeadAttention::create(params_, p + ".cross_attn", d, heads, rng);
    layer.norm3 = LayerNorm::create(params_, p + ".norm3", d);
    layer.ffn = FeedForward::create(params_, p + ".ffn", d, ffn, rng);
    decoder_.push_back(std::move(layer));
  }
  decoder_norm_ = LayerNorm::create(params_, "decoder.norm", d);

  const auto m = static_cast<std::size_t>(config_.num_queries);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(m * d);
  for (double& x : q) x = normal(rng);
  queries_ = params_.add("queries", Tensor::parameter(m, d, std::move(q)));

  box_fc1_ = Linear::create(params_, "box_head.fc1", d, d, rng);
  box_fc2_ = Linear::create(params_, "box_head.fc2", d, d, rng);
  box_fc3_ = Linear::create(params_, "box_head.fc3", d, 2, rng);

  // The class head and task encoder draw from their own streams so that the
  // shared trunk initializes identically regardless of head size.
  Rng head_rng = make_rng(config_.init_seed, 0xC1A55ull + static_cast<std::uint64_t>(config_.num_classes));
  class_head_ = Linear::create(params_, "class_head", d, static_cast<std::size_t>(config_.num_classes) + 1, head_rng);
  if (config_.task_input_dim > 0) {
    Rng task_rng = make_rng(config_.init_seed, 0x7A5Cull);
    task_encoder_ =
        TaskEncoder::create(params_, "task_encoder", static_cast<std::size_t>(config_.task_input_dim), d, task_rng);
  }
}

const TaskEncoder& DetectionTransformer::task_encoder() const {
  if (!has_task_encoder()) throw UsageError("model was built without a task encoder");
  return task_encoder_;
}

namespace {

Tensor to_tensor(const FeatureMatrix& features) {
  return Tensor::constant(features.rows, features.cols, std::vector<double>(features.data.begin(), features.data.end()));
}

}  // namespace

Tensor DetectionTransformer::embed(const FeatureMatrix& features) const {
  return add(input_projection(to_tensor(features)),
             sinusoidal_positions(features.rows, static_cast<std::size_t>(config_.hidden_dim)));
}

Tensor DetectionTransformer::encode(const FeatureMatrix& features, AttentionTrace* trace) const {
  if (features.cols != static_cast<std::size_t>(config_.feature_dim)) {
    throw ShapeError("feature dimension " + std::to_string(features.cols) + " does not match model input " +
                     std::to_string(config_.feature_dim));
  }
  return encode_projected(input_projection(to_tensor(features)),
                          sinusoidal_positions(features.rows, static_cast<std::size_t>(config_.hidden_dim)), trace);
}

Tensor DetectionTransformer::encode_projected(const Tensor& projected, const Tensor& positions,
                                              AttentionTrace* trace) const {
  Tensor x = add(projected, positions);
  for (const auto& layer : encoder_) {
    MatrixD* cap = nullptr;
    if (trace != nullptr) cap = &trace->encoder_self.emplace_back();
    Tensor h = layer.norm1.forward(x);
    x = add(x, layer.self_attn.forward(h, h, cap));
    x = add(x, layer.ffn.forward(layer.norm2.forward(x)));
  }
  return x;
}

Tensor DetectionTransformer::decode(const Tensor& memory, const Tensor& queries, AttentionTrace* trace) const {
  return decode_layers(memory, queries, trace).back();
}

std::vector<Tensor> DetectionTransformer::decode_layers(const Tensor& memory, const Tensor& queries,
                                                        AttentionTrace* trace) const {
  if (queries.cols() != static_cast<std::size_t>(config_.hidden_dim) ||
      memory.cols() != static_cast<std::size_t>(config_.hidden_dim)) {
    throw ShapeError("decoder inputs must have hidden_dim columns");
  }
  std::vector<Tensor> out;
  Tensor t = queries;
  for (const auto& layer : decoder_) {
    MatrixD* self_cap = nullptr;
    MatrixD* cross_cap = nullptr;
    if (trace != nullptr) {
      self_cap = &trace->decoder_self.emplace_back();
      cross_cap = &trace->decoder_cross.emplace_back();
    }
    Tensor h = layer.norm1.forward(t);
    t = add(t, layer.self_attn.forward(h, h, self_cap));
    t = add(t, layer.cross_attn.forward(layer.norm2.forward(t), memory, cross_cap));
    t = add(t, layer.ffn.forward(layer.norm3.forward(t)));
    out.push_back(decoder_norm_.forward(t));
  }
  return out;
}

DetectionSet DetectionTransformer::predict_heads(const Tensor& states) const {
  DetectionSet out;
  out.class_probs = softmax_rows(class_head_.forward(states));
  Tensor h = relu(box_fc1_.forward(states));
  h = relu(box_fc2_.forward(h));
  out.boxes = sigmoid(box_fc3_.forward(h));
  return out;
}

DetectionSet DetectionTransformer::forward(const FeatureMatrix& features, const Tensor& queries,
                                           AttentionTrace* trace) const {
  return predict_heads(decode(encode(features, trace), queries, trace));
}

}  // namespace ltp::nn

namespace ltp::nn {

std::vector<DetectionSet> DetectionTransformer::forward_layers(const FeatureMatrix& features,
                                                               const Tensor& queries) const {
  std::vector<DetectionSet> out;
  for (const auto& states : decode_layers(encode(features, nullptr), queries, nullptr)) {
    out.push_back(predict_heads(states));
  }
  return out;
}

}  // namespace ltp::nn
