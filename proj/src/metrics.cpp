#include "mse2d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mse2d {

namespace {

const std::set<std::string>* relevant_for(const std::string& qid, const RunQrels& qrels,
                                          std::ostream* warn, const char* metric) {
  auto it = qrels.find(qid);
  if (it == qrels.end() || it->second.empty()) {
    if (warn) (*warn) << metric << ": query " << qid << " has no relevant documents\n";
    return nullptr;
  }
  return &it->second;
}

}  // namespace

double mrr_at_k(const Rankings& rankings, const RunQrels& qrels, int k, std::ostream* warn) {
  if (rankings.empty()) throw std::invalid_argument("mrr_at_k: no rankings");
  double total = 0.0;
  for (const auto& [qid, ranked] : rankings) {
    const auto* rel = relevant_for(qid, qrels, warn, "mrr_at_k");
    if (!rel) continue;
    const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < limit; ++r) {
      if (rel->count(ranked[static_cast<size_t>(r)])) {
        total += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(rankings.size());
}

double ndcg_at_k(const Rankings& rankings, const RunQrels& qrels, int k, std::ostream* warn) {
  if (rankings.empty()) throw std::invalid_argument("ndcg_at_k: no rankings");
  double total = 0.0;
  for (const auto& [qid, ranked] : rankings) {
    const auto* rel = relevant_for(qid, qrels, warn, "ndcg_at_k");
    if (!rel) continue;
    double dcg = 0.0;
    const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < limit; ++r) {
      if (rel->count(ranked[static_cast<size_t>(r)])) {
        dcg += 1.0 / std::log2(static_cast<double>(r + 2));
      }
    }
    double idcg = 0.0;
    const int ideal = std::min<int>(k, static_cast<int>(rel->size()));
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    total += dcg / idcg;
  }
  return total / static_cast<double>(rankings.size());
}

namespace {

// tie-averaged ranks, 1-based
std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& predicted, const std::vector<double>& gold) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("spearman: length mismatch");
  if (predicted.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
  const std::vector<double> ra = average_ranks(predicted);
  const std::vector<double> rb = average_ranks(gold);
  const size_t n = ra.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    throw std::invalid_argument("spearman: zero variance input");
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace mse2d
