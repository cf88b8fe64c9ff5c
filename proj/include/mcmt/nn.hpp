#pragma once

#include "mcmt/autograd.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcmt::nn {

using ad::Matrix;
using ad::Var;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Named, ordered collection of trainable arrays owned by one model.
/// Parameter addresses are stable for the lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
  bool all_finite() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Fan-in scaled uniform initializer U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Sine/cosine table used to initialize learned positional embeddings:
/// row p, column 2i is sin(p / 10000^(2i/d)) and column 2i+1 the matching cosine.
Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index dim);

/// Binds parameters onto one Graph. Parameters are leaves that require a
/// gradient only when the context is trainable.
class Context {
 public:
  Context(ad::Graph& graph, bool trainable) : graph_(graph), trainable_(trainable) {}

  ad::Graph& graph() { return graph_; }
  bool trainable() const { return trainable_; }
  Var param(const Parameter& p);

  /// Gradients of all bound parameters after Graph::backward. Parameters
  /// that received no gradient map to zero matrices.
  std::unordered_map<const Parameter*, Matrix> gradients() const;

 private:
  ad::Graph& graph_;
  bool trainable_;
  std::unordered_map<const Parameter*, Var> bound_;
};

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out, may be null

  static Linear make(ParameterStore& store, const std::string& name, int in, int out,
                     bool with_bias, std::mt19937_64& rng);
  Var operator()(Context& ctx, const Var& x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm make(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Context& ctx, const Var& x) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 4;

  static MultiHeadAttention make(ParameterStore& store, const std::string& name, int dim,
                                 int heads, std::mt19937_64& rng);
  Var operator()(Context& ctx, const Var& x, const Var& memory,
                 const std::optional<Var>& key_weights, bool causal) const;
};

struct FeedForward {
  Linear in, out;

  static FeedForward make(ParameterStore& store, const std::string& name, int dim,
                          int hidden, std::mt19937_64& rng);
  Var operator()(Context& ctx, const Var& x) const;
};

/// Pre-norm encoder layer: x + SA(LN(x)), then x + FF(LN(x)).
struct EncoderLayer {
  LayerNorm norm_attn, norm_ff;
  MultiHeadAttention self_attn;
  FeedForward ff;

  static EncoderLayer make(ParameterStore& store, const std::string& name, int dim,
                           int heads, std::mt19937_64& rng);
  Var operator()(Context& ctx, const Var& x, const std::optional<Var>& key_weights,
                 bool causal = false) const;
};

/// Pre-norm decoder layer: self-attention, cross-attention to `memory`, then
/// feed-forward, each with a residual connection.
struct DecoderLayer {
  LayerNorm norm_self, norm_cross, norm_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  static DecoderLayer make(ParameterStore& store, const std::string& name, int dim,
                           int heads, std::mt19937_64& rng);
  Var operator()(Context& ctx, const Var& x, const Var& memory,
                 const std::optional<Var>& self_weights, bool causal,
                 const std::optional<Var>& memory_weights) const;
};

// Feed-forward hidden width as a multiple of the model width.
inline constexpr int kFeedForwardMultiplier = 2;

}  // namespace mcmt::nn
