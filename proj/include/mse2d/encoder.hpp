#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mse2d/graph.hpp"
#include "mse2d/vocab.hpp"

namespace mse2d {

enum class Pooling { kMean, kFirstToken };

const char* pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

struct EncoderConfig {
  int vocab_size = 512;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 128;
  int max_seq_len = 32;
  Pooling pooling = Pooling::kMean;

  void validate() const;
};

template <class S>
struct LayerWeights {
  ad::Var<S> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Var<S> ln1_g, ln1_b;
  ad::Var<S> w1, b1, w2, b2;
  ad::Var<S> ln2_g, ln2_b;
};

// All trainable leaves of the encoder. The leaves persist across steps; each
// forward pass builds a fresh graph on top of them.
template <class S>
struct EncoderParams {
  ad::Var<S> tok_embed;  // vocab x d
  ad::Var<S> pos_embed;  // max_seq_len x d
  std::vector<LayerWeights<S>> layers;

  // normal(0, 0.02) weights, zero biases, unit/zero layer-norm
  static EncoderParams init(const EncoderConfig& cfg, uint64_t seed);

  // Rebuilds the structure from leaves in named() order (gradcheck harness).
  static EncoderParams bind(const EncoderConfig& cfg, const std::vector<ad::Var<S>>& leaves);

  // Stable (name, leaf) enumeration; checkpoint and optimizer order.
  std::vector<std::pair<std::string, ad::Var<S>>> named() const;

  std::vector<Tensor<S>> tensors() const;

  void validate(const EncoderConfig& cfg) const;
};

// Tokenized batch padded to the batch maximum length. The validity mask is
// derived from lengths, never from token ids.
struct TokenBatch {
  std::vector<std::vector<int>> ids;  // each padded to max_len with PAD
  std::vector<int> lengths;
  int max_len = 0;

  int size() const { return static_cast<int>(ids.size()); }

  static TokenBatch from_texts(const std::vector<std::string>& texts, const Vocabulary& vocab,
                               int max_seq_len);
  static TokenBatch from_ids(std::vector<std::vector<int>> sequences);
};

// Pooled sentence embeddings per layer: exactly n_layers entries, each B x d.
template <class S>
struct LayerEmbeddings {
  std::vector<ad::Var<S>> layers;

  int count() const { return static_cast<int>(layers.size()); }
  const ad::Var<S>& last() const { return layers.back(); }
  const ad::Var<S>& layer(int i_one_based) const { return layers.at(static_cast<size_t>(i_one_based) - 1); }
};

// Sentence pooling over token states: mean of valid rows or the first token.
template <class S>
ad::Var<S> pool(const ad::Var<S>& hidden, const std::vector<uint8_t>& valid, Pooling mode);

// One forward pass; entry i is the pooled embedding after transformer layer
// i+1. Entry n_layers-1 is the standard full-model embedding.
template <class S>
LayerEmbeddings<S> encode_all_layers(const TokenBatch& batch, const EncoderParams<S>& params,
                                     const EncoderConfig& cfg);

}  // namespace mse2d
