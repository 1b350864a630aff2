#include "ltp/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace ltp::nn {

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw UsageError("duplicate parameter name " + name);
  if (!t.requires_grad()) throw UsageError("registered tensor must be a parameter: " + name);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw LookupError("no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

StateDict ParameterSet::state() const {
  StateDict out;
  for (const auto& [name, t] : items_) {
    out[name] = NamedArray{t.rows(), t.cols(), std::vector<double>(t.value().begin(), t.value().end())};
  }
  return out;
}

std::vector<std::string> ParameterSet::load(const StateDict& state, bool require_all) {
  std::vector<std::string> loaded;
  for (auto& [name, t] : items_) {
    auto it = state.find(name);
    if (it == state.end()) {
      if (require_all) throw CheckpointError("checkpoint lacks parameter " + name);
      continue;
    }
    if (it->second.rows != t.rows() || it->second.cols != t.cols()) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " + std::to_string(it->second.rows) + "x" +
                            std::to_string(it->second.cols) + ", model " + std::to_string(t.rows()) + "x" +
                            std::to_string(t.cols()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), t.mutable_value().begin());
    loaded.push_back(name);
  }
  return loaded;
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (double& x : w) x = dist(rng);
  Linear l;
  l.weight = params.add(name + ".weight", Tensor::parameter(in, out, std::move(w)));
  l.bias = params.add(name + ".bias", Tensor::parameter(1, out, std::vector<double>(out, 0.0)));
  return l;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = params.add(name + ".gamma", Tensor::parameter(1, dim, std::vector<double>(dim, 1.0)));
  ln.beta = params.add(name + ".beta", Tensor::parameter(1, dim, std::vector<double>(dim, 0.0)));
  return ln;
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                                Rng& rng) {
  FeedForward f;
  f.in = Linear::create(params, name + ".fc1", dim, hidden, rng);
  f.out = Linear::create(params, name + ".fc2", hidden, dim, rng);
  return f;
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("hidden_dim must be divisible by heads");
  MultiHeadAttention a;
  a.query = Linear::create(params, name + ".q", dim, dim, rng);
  a.key = Linear::create(params, name + ".k", dim, dim, rng);
  a.value = Linear::create(params, name + ".v", dim, dim, rng);
  a.output = Linear::create(params, name + ".o", dim, dim, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::forward(const Tensor& queries, const Tensor& keys_values, MatrixD* capture) const {
  Tensor q = query.forward(queries);
  Tensor k = key.forward(keys_values);
  Tensor v = value.forward(keys_values);
  return output.forward(attention(q, k, v, heads, capture));
}

TaskEncoder TaskEncoder::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t dim,
                                Rng& rng) {
  TaskEncoder e;
  e.fc1 = Linear::create(params, name + ".fc1", in, dim, rng);
  e.fc2 = Linear::create(params, name + ".fc2", dim, dim, rng);
  e.fc3 = Linear::create(params, name + ".fc3", dim, dim, rng);
  return e;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> pe(length * dim);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe[t * dim + i] = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < dim) pe[t * dim + i + 1] = std::cos(static_cast<double>(t) * freq);
    }
  }
  return Tensor::constant(length, dim, std::move(pe));
}

}  // namespace ltp::nn
