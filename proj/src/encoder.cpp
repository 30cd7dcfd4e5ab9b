#include "mse2d/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "mse2d/rng.hpp"

namespace mse2d {

using ad::Var;

const char* pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "first-token"; }

Pooling pooling_from_name(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "first-token" || name == "first_token" || name == "cls") return Pooling::kFirstToken;
  throw std::invalid_argument("unknown pooling mode: " + name);
}

void EncoderConfig::validate() const {
  if (vocab_size < 2 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1) {
    throw std::invalid_argument("EncoderConfig: all sizes must be positive (vocab >= 2)");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("EncoderConfig: d_model must be divisible by n_heads");
  }
}

namespace {

template <class S>
Tensor<S> normal_init(Rng& rng, int rows, int cols, double stddev) {
  Tensor<S> t = Tensor<S>::zeros(rows, cols);
  for (auto& v : t.data) v = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

template <class S>
Tensor<S> const_row(int cols, S value) {
  Tensor<S> t = Tensor<S>::zeros(1, cols);
  t.fill(value);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

template <class S>
EncoderParams<S> EncoderParams<S>::init(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  EncoderParams<S> params;
  params.tok_embed = Var<S>::parameter(normal_init<S>(rng, cfg.vocab_size, cfg.d_model, kInitStd));
  params.pos_embed = Var<S>::parameter(normal_init<S>(rng, cfg.max_seq_len, cfg.d_model, kInitStd));
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights<S> w;
    w.wq = Var<S>::parameter(normal_init<S>(rng, d, d, kInitStd));
    w.bq = Var<S>::parameter(const_row<S>(d, S(0)));
    w.wk = Var<S>::parameter(normal_init<S>(rng, d, d, kInitStd));
    w.bk = Var<S>::parameter(const_row<S>(d, S(0)));
    w.wv = Var<S>::parameter(normal_init<S>(rng, d, d, kInitStd));
    w.bv = Var<S>::parameter(const_row<S>(d, S(0)));
    w.wo = Var<S>::parameter(normal_init<S>(rng, d, d, kInitStd));
    w.bo = Var<S>::parameter(const_row<S>(d, S(0)));
    w.ln1_g = Var<S>::parameter(const_row<S>(d, S(1)));
    w.ln1_b = Var<S>::parameter(const_row<S>(d, S(0)));
    w.w1 = Var<S>::parameter(normal_init<S>(rng, d, cfg.d_ff, kInitStd));
    w.b1 = Var<S>::parameter(const_row<S>(cfg.d_ff, S(0)));
    w.w2 = Var<S>::parameter(normal_init<S>(rng, cfg.d_ff, d, kInitStd));
    w.b2 = Var<S>::parameter(const_row<S>(d, S(0)));
    w.ln2_g = Var<S>::parameter(const_row<S>(d, S(1)));
    w.ln2_b = Var<S>::parameter(const_row<S>(d, S(0)));
    params.layers.push_back(std::move(w));
  }
  return params;
}

template <class S>
std::vector<std::pair<std::string, Var<S>>> EncoderParams<S>::named() const {
  std::vector<std::pair<std::string, Var<S>>> out;
  out.emplace_back("tok_embed", tok_embed);
  out.emplace_back("pos_embed", pos_embed);
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "wq", w.wq);
    out.emplace_back(p + "bq", w.bq);
    out.emplace_back(p + "wk", w.wk);
    out.emplace_back(p + "bk", w.bk);
    out.emplace_back(p + "wv", w.wv);
    out.emplace_back(p + "bv", w.bv);
    out.emplace_back(p + "wo", w.wo);
    out.emplace_back(p + "bo", w.bo);
    out.emplace_back(p + "ln1_g", w.ln1_g);
    out.emplace_back(p + "ln1_b", w.ln1_b);
    out.emplace_back(p + "w1", w.w1);
    out.emplace_back(p + "b1", w.b1);
    out.emplace_back(p + "w2", w.w2);
    out.emplace_back(p + "b2", w.b2);
    out.emplace_back(p + "ln2_g", w.ln2_g);
    out.emplace_back(p + "ln2_b", w.ln2_b);
  }
  return out;
}

template <class S>
EncoderParams<S> EncoderParams<S>::bind(const EncoderConfig& cfg, const std::vector<Var<S>>& leaves) {
  const size_t expected = 2 + 16 * static_cast<size_t>(cfg.n_layers);
  if (leaves.size() != expected) {
    throw std::invalid_argument("EncoderParams::bind: expected " + std::to_string(expected) +
                                " leaves, got " + std::to_string(leaves.size()));
  }
  EncoderParams<S> params;
  size_t i = 0;
  params.tok_embed = leaves[i++];
  params.pos_embed = leaves[i++];
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights<S> w;
    w.wq = leaves[i++];
    w.bq = leaves[i++];
    w.wk = leaves[i++];
    w.bk = leaves[i++];
    w.wv = leaves[i++];
    w.bv = leaves[i++];
    w.wo = leaves[i++];
    w.bo = leaves[i++];
    w.ln1_g = leaves[i++];
    w.ln1_b = leaves[i++];
    w.w1 = leaves[i++];
    w.b1 = leaves[i++];
    w.w2 = leaves[i++];
    w.b2 = leaves[i++];
    w.ln2_g = leaves[i++];
    w.ln2_b = leaves[i++];
    params.layers.push_back(std::move(w));
  }
  return params;
}

template <class S>
std::vector<Tensor<S>> EncoderParams<S>::tensors() const {
  std::vector<Tensor<S>> out;
  for (const auto& [name, var] : named()) {
    (void)name;
    out.push_back(var.value());
  }
  return out;
}

template <class S>
void EncoderParams<S>::validate(const EncoderConfig& cfg) const {
  if (static_cast<int>(layers.size()) != cfg.n_layers) {
    throw std::runtime_error("EncoderParams: layer count mismatch");
  }
  for (const auto& [name, var] : named()) {
    if (!var.valid()) throw std::runtime_error("EncoderParams: missing tensor " + name);
    if (!var.value().all_finite()) throw std::runtime_error("EncoderParams: non-finite tensor " + name);
  }
  if (tok_embed.value().rows() != cfg.vocab_size || tok_embed.value().cols() != cfg.d_model ||
      pos_embed.value().rows() != cfg.max_seq_len || pos_embed.value().cols() != cfg.d_model) {
    throw std::runtime_error("EncoderParams: embedding dims inconsistent with config");
  }
}

TokenBatch TokenBatch::from_texts(const std::vector<std::string>& texts, const Vocabulary& vocab,
                                  int max_seq_len) {
  std::vector<std::vector<int>> sequences;
  sequences.reserve(texts.size());
  for (const auto& t : texts) sequences.push_back(tokenize(t, vocab, max_seq_len));
  return from_ids(std::move(sequences));
}

TokenBatch TokenBatch::from_ids(std::vector<std::vector<int>> sequences) {
  if (sequences.empty()) throw std::invalid_argument("TokenBatch: empty batch");
  TokenBatch batch;
  for (const auto& s : sequences) {
    if (s.empty()) throw std::invalid_argument("TokenBatch: empty sequence");
    batch.lengths.push_back(static_cast<int>(s.size()));
    batch.max_len = std::max(batch.max_len, static_cast<int>(s.size()));
  }
  for (auto& s : sequences) {
    s.resize(static_cast<size_t>(batch.max_len), Vocabulary::kPadId);
  }
  batch.ids = std::move(sequences);
  return batch;
}

template <class S>
Var<S> pool(const Var<S>& hidden, const std::vector<uint8_t>& valid, Pooling mode) {
  if (mode == Pooling::kMean) {
    return ad::masked_mean_rows(hidden, valid);
  }
  std::vector<uint8_t> first(valid.size(), 0);
  if (valid.empty() || !valid[0]) throw std::runtime_error("pool: first token not valid");
  first[0] = 1;
  return ad::masked_mean_rows(hidden, first);
}

namespace {

// Additive key mask: 0 on valid positions, a large negative bias on padding.
// -1e4 underflows to an exactly-zero attention weight after softmax, so PAD
// token ids cannot influence valid rows.
template <class S>
Tensor<S> key_bias_row(int max_len, int length) {
  Tensor<S> t = Tensor<S>::zeros(1, max_len);
  for (int j = length; j < max_len; ++j) t.data[static_cast<size_t>(j)] = S(-1e4);
  return t;
}

template <class S>
Var<S> transformer_layer(const Var<S>& x, const LayerWeights<S>& w, const Var<S>& key_bias,
                         const EncoderConfig& cfg) {
  const int d_head = cfg.d_model / cfg.n_heads;
  const S inv_sqrt_dh = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_head)));

  Var<S> q = ad::add(ad::matmul(x, w.wq), w.bq);
  Var<S> k = ad::add(ad::matmul(x, w.wk), w.bk);
  Var<S> v = ad::add(ad::matmul(x, w.wv), w.bv);

  std::vector<Var<S>> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const int off = h * d_head;
    Var<S> qh = ad::slice_cols(q, off, d_head);
    Var<S> kh = ad::slice_cols(k, off, d_head);
    Var<S> vh = ad::slice_cols(v, off, d_head);
    Var<S> scores = ad::scale(ad::matmul(qh, kh, /*transpose_b=*/true), inv_sqrt_dh);
    scores = ad::add(scores, key_bias);
    Var<S> attn = ad::row_softmax(scores);
    heads.push_back(ad::matmul(attn, vh));
  }
  Var<S> attn_out = ad::add(ad::matmul(ad::concat_cols(heads), w.wo), w.bo);
  Var<S> h1 = ad::layer_norm(ad::add(x, attn_out), w.ln1_g, w.ln1_b);

  Var<S> ff = ad::add(ad::matmul(ad::gelu(ad::add(ad::matmul(h1, w.w1), w.b1)), w.w2), w.b2);
  return ad::layer_norm(ad::add(h1, ff), w.ln2_g, w.ln2_b);
}

}  // namespace

template <class S>
LayerEmbeddings<S> encode_all_layers(const TokenBatch& batch, const EncoderParams<S>& params,
                                     const EncoderConfig& cfg) {
  if (batch.size() == 0) throw std::invalid_argument("encode_all_layers: empty batch");
  if (batch.max_len > cfg.max_seq_len) {
    throw std::invalid_argument("encode_all_layers: sequence longer than max_seq_len");
  }
  const int T = batch.max_len;
  std::vector<int> positions(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) positions[static_cast<size_t>(t)] = t;

  // pooled[l][s] = sentence s pooled after layer l+1
  std::vector<std::vector<Var<S>>> pooled(static_cast<size_t>(cfg.n_layers));
  for (int s = 0; s < batch.size(); ++s) {
    const auto& ids = batch.ids[static_cast<size_t>(s)];
    const int length = batch.lengths[static_cast<size_t>(s)];
    std::vector<uint8_t> valid(static_cast<size_t>(T), 0);
    for (int t = 0; t < length; ++t) valid[static_cast<size_t>(t)] = 1;

    Var<S> x = ad::add(ad::embedding_lookup(params.tok_embed, ids),
                       ad::embedding_lookup(params.pos_embed, positions));
    Var<S> key_bias = Var<S>::constant(key_bias_row<S>(T, length));
    for (int l = 0; l < cfg.n_layers; ++l) {
      x = transformer_layer(x, params.layers[static_cast<size_t>(l)], key_bias, cfg);
      pooled[static_cast<size_t>(l)].push_back(pool(x, valid, cfg.pooling));
    }
  }

  LayerEmbeddings<S> out;
  out.layers.reserve(static_cast<size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    out.layers.push_back(ad::concat_rows(pooled[static_cast<size_t>(l)]));
  }
  return out;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template ad::Var<float> pool<float>(const ad::Var<float>&, const std::vector<uint8_t>&, Pooling);
template ad::Var<double> pool<double>(const ad::Var<double>&, const std::vector<uint8_t>&, Pooling);
template LayerEmbeddings<float> encode_all_layers<float>(const TokenBatch&, const EncoderParams<float>&,
                                                         const EncoderConfig&);
template LayerEmbeddings<double> encode_all_layers<double>(const TokenBatch&,
                                                           const EncoderParams<double>&,
                                                           const EncoderConfig&);

}  // namespace mse2d
