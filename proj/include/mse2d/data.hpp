#pragma once

#include <string>
#include <vector>

#include "mse2d/eval.hpp"
#include "mse2d/trainer.hpp"

namespace mse2d {

// JSON-lines ingestion, fail-fast: the first malformed line aborts the load
// with its line number; an empty file is an error.
std::vector<CorpusDoc> load_corpus_jsonl(const std::string& path);
std::vector<QueryRec> load_queries_jsonl(const std::string& path);
std::vector<StsPair> load_sts_jsonl(const std::string& path);

// tab-separated: query-id, doc-id, relevance (0/1)
RunQrels load_qrels_tsv(const std::string& path);

// (query text, positive doc text) pairs joined through the qrels, ordered by
// query file order then doc id.
std::vector<TrainExample> build_train_pairs(const std::vector<QueryRec>& queries,
                                            const std::vector<CorpusDoc>& corpus,
                                            const RunQrels& qrels);

std::string sweep_csv(const SweepResult& result);
void write_sweep_csv(const SweepResult& result, const std::string& path);

// One layer x dim table per metric, a readable view of the CSV.
std::string sweep_markdown(const SweepResult& result);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mse2d
