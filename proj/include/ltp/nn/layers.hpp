#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ltp/common.hpp"
#include "ltp/nn/tensor.hpp"

namespace ltp::nn {

// Plain-value snapshot of a named tensor; what checkpoints store.
struct NamedArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};
using StateDict = std::map<std::string, NamedArray>;

// Ordered registry of trainable tensors. Modules hold handles to the same
// nodes, so updating a registered tensor in place updates the module.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t scalar_count() const;

  void zero_grad();
  StateDict state() const;
  // Copies matching entries from `state`; returns the names that were loaded.
  // Shape mismatches throw CheckpointError.
  std::vector<std::string> load(const StateDict& state, bool require_all);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Xavier-uniform weight (in x out) and zero bias.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterSet& params, const std::string& name, std::size_t dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct FeedForward {
  Linear in;
  Linear out;

  static FeedForward create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                            Rng& rng);
  Tensor forward(const Tensor& x) const { return out.forward(relu(in.forward(x))); }
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterSet& params, const std::string& name, std::size_t dim,
                                   std::size_t heads, Rng& rng);
  Tensor forward(const Tensor& queries, const Tensor& keys_values, MatrixD* capture) const;
};

// Projects the concatenated condition vector onto the query dimension:
// three affine layers with ReLU between them.
struct TaskEncoder {
  Linear fc1;
  Linear fc2;
  Linear fc3;

  static TaskEncoder create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t dim,
                            Rng& rng);
  std::size_t input_dim() const { return fc1.weight.rows(); }
  std::size_t output_dim() const { return fc3.weight.cols(); }
  Tensor forward(const Tensor& z) const { return fc3.forward(relu(fc2.forward(relu(fc1.forward(z))))); }
};

// Fixed sinusoidal table: pe[t][2i] = sin(t / 10000^(2i/d)), pe[t][2i+1] = cos(...).
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

}  // namespace ltp::nn
