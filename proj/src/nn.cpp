#include "mcmt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mcmt::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter>(Parameter{name, std::move(init)}));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return *params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index dim) {
  Matrix m(rows, dim);
  for (Eigen::Index p = 0; p < rows; ++p) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double freq = std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      m(p, j) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return m;
}

Var Context::param(const Parameter& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  Var v = graph_.input(p.value, trainable_);
  bound_.emplace(&p, v);
  return v;
}

std::unordered_map<const Parameter*, Matrix> Context::gradients() const {
  std::unordered_map<const Parameter*, Matrix> out;
  for (const auto& [p, v] : bound_) {
    out[p] = graph_.has_grad(v.id()) ? v.grad() : Matrix::Zero(v.rows(), v.cols());
  }
  return out;
}

Linear Linear::make(ParameterStore& store, const std::string& name, int in, int out,
                    bool with_bias, std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(name + ".weight", fan_in_uniform(in, out, rng));
  if (with_bias) l.bias = &store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Context& ctx, const Var& x) const {
  Var y = ad::matmul(x, ctx.param(*weight));
  return bias ? ad::add_row(y, ctx.param(*bias)) : y;
}

LayerNorm LayerNorm::make(ParameterStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gain = &store.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = &store.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Context& ctx, const Var& x) const {
  return ad::layer_norm(x, ctx.param(*gain), ctx.param(*bias));
}

MultiHeadAttention MultiHeadAttention::make(ParameterStore& store, const std::string& name,
                                            int dim, int heads, std::mt19937_64& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw std::invalid_argument(name + ": head count must divide width");
  }
  MultiHeadAttention a;
  a.query = Linear::make(store, name + ".q", dim, dim, true, rng);
  a.key = Linear::make(store, name + ".k", dim, dim, true, rng);
  a.value = Linear::make(store, name + ".v", dim, dim, true, rng);
  a.output = Linear::make(store, name + ".o", dim, dim, true, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Context& ctx, const Var& x, const Var& memory,
                                   const std::optional<Var>& key_weights,
                                   bool causal) const {
  Var q = query(ctx, x);
  Var k = key(ctx, memory);
  Var v = value(ctx, memory);
  return output(ctx, ad::attention(q, k, v, key_weights, heads, causal));
}

FeedForward FeedForward::make(ParameterStore& store, const std::string& name, int dim,
                              int hidden, std::mt19937_64& rng) {
  FeedForward f;
  f.in = Linear::make(store, name + ".in", dim, hidden, true, rng);
  f.out = Linear::make(store, name + ".out", hidden, dim, true, rng);
  return f;
}

Var FeedForward::operator()(Context& ctx, const Var& x) const {
  return out(ctx, ad::relu(in(ctx, x)));
}

EncoderLayer EncoderLayer::make(ParameterStore& store, const std::string& name, int dim,
                                int heads, std::mt19937_64& rng) {
  EncoderLayer l;
  l.norm_attn = LayerNorm::make(store, name + ".ln_attn", dim);
  l.self_attn = MultiHeadAttention::make(store, name + ".self_attn", dim, heads, rng);
  l.norm_ff = LayerNorm::make(store, name + ".ln_ff", dim);
  l.ff = FeedForward::make(store, name + ".ff", dim, dim * kFeedForwardMultiplier, rng);
  return l;
}

Var EncoderLayer::operator()(Context& ctx, const Var& x,
                             const std::optional<Var>& key_weights, bool causal) const {
  Var n = norm_attn(ctx, x);
  Var h = ad::add(x, self_attn(ctx, n, n, key_weights, causal));
  return ad::add(h, ff(ctx, norm_ff(ctx, h)));
}

DecoderLayer DecoderLayer::make(ParameterStore& store, const std::string& name, int dim,
                                int heads, std::mt19937_64& rng) {
  DecoderLayer l;
  l.norm_self = LayerNorm::make(store, name + ".ln_self", dim);
  l.self_attn = MultiHeadAttention::make(store, name + ".self_attn", dim, heads, rng);
  l.norm_cross = LayerNorm::make(store, name + ".ln_cross", dim);
  l.cross_attn = MultiHeadAttention::make(store, name + ".cross_attn", dim, heads, rng);
  l.norm_ff = LayerNorm::make(store, name + ".ln_ff", dim);
  l.ff = FeedForward::make(store, name + ".ff", dim, dim * kFeedForwardMultiplier, rng);
  return l;
}

Var DecoderLayer::operator()(Context& ctx, const Var& x, const Var& memory,
                             const std::optional<Var>& self_weights, bool causal,
                             const std::optional<Var>& memory_weights) const {
  Var n = norm_self(ctx, x);
  Var h = ad::add(x, self_attn(ctx, n, n, self_weights, causal));
  h = ad::add(h, cross_attn(ctx, norm_cross(ctx, h), memory, memory_weights, false));
  return ad::add(h, ff(ctx, norm_ff(ctx, h)));
}

}  // namespace mcmt::nn
