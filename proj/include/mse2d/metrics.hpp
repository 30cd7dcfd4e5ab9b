#pragma once

#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace mse2d {

// query id -> relevant doc ids (binary relevance)
using RunQrels = std::map<std::string, std::set<std::string>>;

// ordered (query id, ranked doc ids) pairs
using Rankings = std::vector<std::pair<std::string, std::vector<std::string>>>;

// Mean over queries of 1/rank of the first relevant doc within the top k,
// 0 when none. Queries absent from qrels count as zero-relevant (warned).
double mrr_at_k(const Rankings& rankings, const RunQrels& qrels, int k = 10,
                std::ostream* warn = nullptr);

// Binary-gain NDCG with 1/log2(rank+1) discounts; zero-relevant queries
// contribute 0 (warned).
double ndcg_at_k(const Rankings& rankings, const RunQrels& qrels, int k = 10,
                 std::ostream* warn = nullptr);

// Pearson correlation of tie-averaged ranks.
double spearman(const std::vector<double>& predicted, const std::vector<double>& gold);

}  // namespace mse2d
