#pragma once

#include <cstdint>

#include "mse2d/eval.hpp"
#include "mse2d/vocab.hpp"

namespace mse2d {

// Topic-structured synthetic retrieval task. Documents draw tokens from a
// per-topic Zipf-weighted slice of the vocabulary; each query subsamples
// tokens from one source document, which is its only relevant document.
struct SynthTaskSpec {
  int vocab_size = 512;
  int n_topics = 20;
  int n_docs = 2000;
  int n_train_queries = 500;
  int n_eval_queries = 100;
  int doc_len_min = 10;
  int doc_len_max = 14;
  int query_len = 4;
  uint64_t seed = 7;
};

struct SynthTask {
  Vocabulary vocab;
  std::vector<CorpusDoc> corpus;
  std::vector<QueryRec> train_queries;
  RunQrels train_qrels;
  std::vector<QueryRec> eval_queries;
  RunQrels eval_qrels;
};

SynthTask make_retrieval_task(const SynthTaskSpec& spec);

}  // namespace mse2d
