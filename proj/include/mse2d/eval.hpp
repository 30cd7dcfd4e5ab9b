#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mse2d/encoder.hpp"
#include "mse2d/metrics.hpp"
#include "mse2d/trainer.hpp"

namespace mse2d {

// An (layer, dimension) operating point, both 1-based/top-inclusive.
struct SubModelSelector {
  int layer = 1;
  int dim = 1;

  void validate(const EncoderConfig& cfg) const;
};

struct CorpusDoc {
  std::string id;
  std::string text;
};

struct QueryRec {
  std::string id;
  std::string text;
};

struct StsPair {
  std::string s1;
  std::string s2;
  double score = 0.0;
};

struct RetrievalEvalSet {
  std::vector<QueryRec> queries;
  std::vector<CorpusDoc> corpus;
  RunQrels qrels;
};

struct ScoredDoc {
  std::string id;
  double score;
};

struct SweepRow {
  std::string objective;
  int layer;
  int dim;
  std::string metric;
  double value;
  uint64_t seed;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Per-cell fingerprint of the corpus embedding matrix each grid cell scored
// against (FNV-1a over the raw bytes); lets callers check the fix-doc
// contract that all cells share one corpus encoding.
using CorpusTrace = std::map<std::pair<int, int>, uint64_t>;

// Inference-side model: constant leaves, no gradient bookkeeping.
struct Model {
  EncoderConfig config;
  EncoderParams<float> params;
};

Model model_from_checkpoint(const Checkpoint& ckpt);

// Pooled embeddings of layer `selector.layer`, truncated to `selector.dim`
// and L2-normalized. Rows are independent of batch composition.
Tensor<float> embed_at(const Model& model, const Vocabulary& vocab, const SubModelSelector& selector,
                       const std::vector<std::string>& texts);

// Exact top-n by descending dot product, ties broken by ascending doc id.
std::vector<ScoredDoc> brute_force_topk(const float* query, int dim, const Tensor<float>& corpus,
                                        const std::vector<std::string>& doc_ids, int n);

SweepResult sweep_retrieval(const Model& model, const Vocabulary& vocab,
                            const std::vector<int>& layers, const std::vector<int>& dims,
                            const RetrievalEvalSet& eval_set, bool fix_doc,
                            const std::string& objective_label, uint64_t seed,
                            CorpusTrace* trace = nullptr, std::ostream* warn = nullptr);

SweepResult sweep_sts(const Model& model, const Vocabulary& vocab, const std::vector<int>& layers,
                      const std::vector<int>& dims, const std::vector<StsPair>& pairs,
                      const std::string& objective_label, uint64_t seed);

}  // namespace mse2d
