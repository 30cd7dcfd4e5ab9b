#include "mse2d/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mse2d/rng.hpp"

namespace mse2d {

namespace {

std::string padded_id(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, n);
  return buf;
}

// token indices within a topic, Zipf-weighted
int draw_topic_token(Rng& rng, int topic_size) {
  static thread_local std::vector<double> cdf;
  cdf.assign(static_cast<size_t>(topic_size), 0.0);
  double total = 0.0;
  for (int i = 0; i < topic_size; ++i) {
    total += 1.0 / static_cast<double>(1 + i);
    cdf[static_cast<size_t>(i)] = total;
  }
  const double u = rng.uniform() * total;
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(it - cdf.begin());
}

}  // namespace

SynthTask make_retrieval_task(const SynthTaskSpec& spec) {
  if (spec.vocab_size < spec.n_topics + 2 || spec.n_topics < 1) {
    throw std::invalid_argument("make_retrieval_task: vocab too small for topic count");
  }
  if (spec.n_train_queries + spec.n_eval_queries > spec.n_docs) {
    throw std::invalid_argument("make_retrieval_task: more queries than source documents");
  }
  if (spec.query_len > spec.doc_len_min || spec.doc_len_min > spec.doc_len_max) {
    throw std::invalid_argument("make_retrieval_task: inconsistent lengths");
  }

  Rng rng(spec.seed);
  SynthTask task;

  std::vector<std::string> tokens;
  tokens.reserve(static_cast<size_t>(spec.vocab_size));
  tokens.push_back("[pad]");
  tokens.push_back("[unk]");
  for (int i = 2; i < spec.vocab_size; ++i) tokens.push_back(padded_id("w", i));
  task.vocab = Vocabulary(std::move(tokens));

  const int usable = spec.vocab_size - 2;
  const int topic_size = usable / spec.n_topics;
  if (topic_size < spec.query_len) {
    throw std::invalid_argument("make_retrieval_task: topics too small");
  }

  // documents: topic round-robin, tokens drawn from the topic slice
  std::vector<std::vector<std::string>> doc_tokens(static_cast<size_t>(spec.n_docs));
  for (int d = 0; d < spec.n_docs; ++d) {
    const int topic = d % spec.n_topics;
    const int base = 2 + topic * topic_size;
    const int len = rng.uniform_int(spec.doc_len_min, spec.doc_len_max);
    auto& toks = doc_tokens[static_cast<size_t>(d)];
    toks.reserve(static_cast<size_t>(len));
    for (int t = 0; t < len; ++t) {
      toks.push_back(task.vocab.token(base + draw_topic_token(rng, topic_size)));
    }
    std::ostringstream text;
    for (size_t t = 0; t < toks.size(); ++t) {
      if (t) text << ' ';
      text << toks[t];
    }
    task.corpus.push_back({padded_id("d", d), text.str()});
  }

  // queries subsample distinct positions of one source document
  std::vector<int> doc_order(static_cast<size_t>(spec.n_docs));
  std::iota(doc_order.begin(), doc_order.end(), 0);
  rng.shuffle(doc_order);

  auto make_query = [&](const char* prefix, int qi, int doc_index) {
    const auto& toks = doc_tokens[static_cast<size_t>(doc_index)];
    std::vector<int> positions(toks.size());
    std::iota(positions.begin(), positions.end(), 0);
    rng.shuffle(positions);
    positions.resize(static_cast<size_t>(spec.query_len));
    std::sort(positions.begin(), positions.end());
    std::ostringstream text;
    for (size_t t = 0; t < positions.size(); ++t) {
      if (t) text << ' ';
      text << toks[static_cast<size_t>(positions[t])];
    }
    return QueryRec{padded_id(prefix, qi), text.str()};
  };

  for (int q = 0; q < spec.n_train_queries; ++q) {
    const int doc = doc_order[static_cast<size_t>(q)];
    QueryRec rec = make_query("tq", q, doc);
    task.train_qrels[rec.id] = {task.corpus[static_cast<size_t>(doc)].id};
    task.train_queries.push_back(std::move(rec));
  }
  for (int q = 0; q < spec.n_eval_queries; ++q) {
    const int doc = doc_order[static_cast<size_t>(spec.n_train_queries + q)];
    QueryRec rec = make_query("eq", q, doc);
    task.eval_qrels[rec.id] = {task.corpus[static_cast<size_t>(doc)].id};
    task.eval_queries.push_back(std::move(rec));
  }
  return task;
}

}  // namespace mse2d
