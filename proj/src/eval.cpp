#include "mse2d/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mse2d {

void SubModelSelector::validate(const EncoderConfig& cfg) const {
  if (layer < 1 || layer > cfg.n_layers) {
    throw std::out_of_range("selector: layer " + std::to_string(layer) + " out of [1," +
                            std::to_string(cfg.n_layers) + "]");
  }
  if (dim < 1 || dim > cfg.d_model) {
    throw std::out_of_range("selector: dim " + std::to_string(dim) + " out of [1," +
                            std::to_string(cfg.d_model) + "]");
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  return Model{ckpt.config.encoder, params_from_checkpoint(ckpt, /*trainable=*/false)};
}

namespace {

constexpr int kEvalChunk = 64;

// Full-dimension pooled embeddings for every layer, batched in fixed-size
// chunks. Chunking cannot change values: padding columns carry exactly-zero
// attention weight.
std::vector<Tensor<float>> embed_layers_raw(const Model& model, const Vocabulary& vocab,
                                            const std::vector<std::string>& texts) {
  if (texts.empty()) throw std::invalid_argument("embed: no texts");
  const int n = static_cast<int>(texts.size());
  const int d = model.config.d_model;
  std::vector<Tensor<float>> out;
  for (int l = 0; l < model.config.n_layers; ++l) out.push_back(Tensor<float>::zeros(n, d));
  for (int start = 0; start < n; start += kEvalChunk) {
    const int stop = std::min(n, start + kEvalChunk);
    std::vector<std::string> chunk(texts.begin() + start, texts.begin() + stop);
    TokenBatch batch = TokenBatch::from_texts(chunk, vocab, model.config.max_seq_len);
    LayerEmbeddings<float> embs = encode_all_layers(batch, model.params, model.config);
    for (int l = 0; l < model.config.n_layers; ++l) {
      const auto& value = embs.layers[static_cast<size_t>(l)].value();
      std::copy(value.data.begin(), value.data.end(),
                out[static_cast<size_t>(l)].data.begin() + static_cast<size_t>(start) * d);
    }
  }
  return out;
}

Tensor<float> truncate_normalize(const Tensor<float>& m, int k) {
  const int rows = m.rows();
  Tensor<float> out = Tensor<float>::zeros(rows, k);
  for (int r = 0; r < rows; ++r) {
    const float* src = m.data.data() + static_cast<size_t>(r) * m.cols();
    float* dst = out.data.data() + static_cast<size_t>(r) * k;
    double sq = 0.0;
    for (int c = 0; c < k; ++c) sq += static_cast<double>(src[c]) * src[c];
    const double norm = std::sqrt(sq);
    if (!(norm > 1e-12)) throw std::runtime_error("embed: zero-norm embedding row");
    for (int c = 0; c < k; ++c) dst[c] = static_cast<float>(src[c] / norm);
  }
  return out;
}

uint64_t fnv1a(const void* data, size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xCBF29CE484222325ULL;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

void validate_grid(const std::vector<int>& layers, const std::vector<int>& dims,
                   const EncoderConfig& cfg) {
  if (layers.empty() || dims.empty()) throw std::invalid_argument("sweep: empty grid");
  for (int l : layers) SubModelSelector{l, 1}.validate(cfg);
  for (int k : dims) SubModelSelector{1, k}.validate(cfg);
}

}  // namespace

Tensor<float> embed_at(const Model& model, const Vocabulary& vocab, const SubModelSelector& selector,
                       const std::vector<std::string>& texts) {
  selector.validate(model.config);
  const auto layers = embed_layers_raw(model, vocab, texts);
  return truncate_normalize(layers[static_cast<size_t>(selector.layer - 1)], selector.dim);
}

std::vector<ScoredDoc> brute_force_topk(const float* query, int dim, const Tensor<float>& corpus,
                                        const std::vector<std::string>& doc_ids, int n) {
  if (doc_ids.empty()) throw std::invalid_argument("brute_force_topk: empty corpus");
  if (corpus.rows() != static_cast<int>(doc_ids.size()) || corpus.cols() != dim) {
    throw std::invalid_argument("brute_force_topk: corpus dims mismatch");
  }
  if (n < 1) throw std::invalid_argument("brute_force_topk: n must be >= 1");
  std::vector<ScoredDoc> scored;
  scored.reserve(doc_ids.size());
  for (size_t i = 0; i < doc_ids.size(); ++i) {
    const float* row = corpus.data.data() + i * static_cast<size_t>(dim);
    double dot = 0.0;
    for (int c = 0; c < dim; ++c) dot += static_cast<double>(row[c]) * query[c];
    scored.push_back({doc_ids[i], dot});
  }
  const size_t keep = std::min<size_t>(static_cast<size_t>(n), scored.size());
  const auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    better);
  scored.resize(keep);
  return scored;
}

SweepResult sweep_retrieval(const Model& model, const Vocabulary& vocab,
                            const std::vector<int>& layers, const std::vector<int>& dims,
                            const RetrievalEvalSet& eval_set, bool fix_doc,
                            const std::string& objective_label, uint64_t seed, CorpusTrace* trace,
                            std::ostream* warn) {
  validate_grid(layers, dims, model.config);
  if (eval_set.queries.empty() || eval_set.corpus.empty()) {
    throw std::invalid_argument("sweep_retrieval: empty queries or corpus");
  }
  std::vector<std::string> query_texts, doc_texts, doc_ids;
  for (const auto& q : eval_set.queries) query_texts.push_back(q.text);
  for (const auto& d : eval_set.corpus) {
    doc_texts.push_back(d.text);
    doc_ids.push_back(d.id);
  }
  const auto query_layers = embed_layers_raw(model, vocab, query_texts);
  const auto corpus_layers = embed_layers_raw(model, vocab, doc_texts);
  const int last = model.config.n_layers;

  SweepResult result;
  for (int layer : layers) {
    for (int k : dims) {
      const Tensor<float>& corpus_src = corpus_layers[static_cast<size_t>((fix_doc ? last : layer) - 1)];
      if (trace) {
        (*trace)[{layer, k}] = fnv1a(corpus_src.data.data(), corpus_src.data.size() * sizeof(float));
      }
      const Tensor<float> corpus_k = truncate_normalize(corpus_src, k);
      const Tensor<float> queries_k =
          truncate_normalize(query_layers[static_cast<size_t>(layer - 1)], k);
      Rankings rankings;
      rankings.reserve(eval_set.queries.size());
      for (size_t qi = 0; qi < eval_set.queries.size(); ++qi) {
        const float* qrow = queries_k.data.data() + qi * static_cast<size_t>(k);
        auto top = brute_force_topk(qrow, k, corpus_k, doc_ids, 10);
        std::vector<std::string> ids;
        ids.reserve(top.size());
        for (auto& s : top) ids.push_back(std::move(s.id));
        rankings.emplace_back(eval_set.queries[qi].id, std::move(ids));
      }
      result.rows.push_back(
          {objective_label, layer, k, "mrr@10", mrr_at_k(rankings, eval_set.qrels, 10, warn), seed});
      result.rows.push_back(
          {objective_label, layer, k, "ndcg@10", ndcg_at_k(rankings, eval_set.qrels, 10, warn), seed});
    }
  }
  return result;
}

SweepResult sweep_sts(const Model& model, const Vocabulary& vocab, const std::vector<int>& layers,
                      const std::vector<int>& dims, const std::vector<StsPair>& pairs,
                      const std::string& objective_label, uint64_t seed) {
  validate_grid(layers, dims, model.config);
  if (pairs.size() < 2) throw std::invalid_argument("sweep_sts: need at least 2 pairs");
  std::vector<std::string> s1, s2;
  std::vector<double> gold;
  for (const auto& p : pairs) {
    s1.push_back(p.s1);
    s2.push_back(p.s2);
    gold.push_back(p.score);
  }
  const auto left_layers = embed_layers_raw(model, vocab, s1);
  const auto right_layers = embed_layers_raw(model, vocab, s2);

  SweepResult result;
  for (int layer : layers) {
    for (int k : dims) {
      const Tensor<float> a = truncate_normalize(left_layers[static_cast<size_t>(layer - 1)], k);
      const Tensor<float> b = truncate_normalize(right_layers[static_cast<size_t>(layer - 1)], k);
      std::vector<double> sims(pairs.size());
      for (size_t i = 0; i < pairs.size(); ++i) {
        double dot = 0.0;
        for (int c = 0; c < k; ++c) {
          dot += static_cast<double>(a.data[i * static_cast<size_t>(k) + c]) *
                 static_cast<double>(b.data[i * static_cast<size_t>(k) + c]);
        }
        sims[i] = dot;
      }
      result.rows.push_back({objective_label, layer, k, "spearman", spearman(sims, gold), seed});
    }
  }
  return result;
}

}  // namespace mse2d
