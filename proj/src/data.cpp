#include "mse2d/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mse2d {

namespace {

using nlohmann::json;

[[noreturn]] void ingest_error(const std::string& path, size_t line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::string require_string(const json& j, const char* field, const std::string& path, size_t line) {
  if (!j.contains(field)) ingest_error(path, line, std::string("missing field \"") + field + "\"");
  if (!j.at(field).is_string()) ingest_error(path, line, std::string("field \"") + field + "\" must be a string");
  std::string v = j.at(field).get<std::string>();
  if (v.empty()) ingest_error(path, line, std::string("field \"") + field + "\" is empty");
  return v;
}

template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  size_t line_no = 0;
  size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      ingest_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    fn(j, line_no);
    ++records;
  }
  if (records == 0) throw std::runtime_error(path + ": no records");
}

}  // namespace

std::vector<CorpusDoc> load_corpus_jsonl(const std::string& path) {
  std::vector<CorpusDoc> docs;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, size_t line) {
    CorpusDoc d{require_string(j, "id", path, line), require_string(j, "text", path, line)};
    if (!seen.insert(d.id).second) ingest_error(path, line, "duplicate doc id " + d.id);
    docs.push_back(std::move(d));
  });
  return docs;
}

std::vector<QueryRec> load_queries_jsonl(const std::string& path) {
  std::vector<QueryRec> queries;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, size_t line) {
    QueryRec q{require_string(j, "id", path, line), require_string(j, "text", path, line)};
    if (!seen.insert(q.id).second) ingest_error(path, line, "duplicate query id " + q.id);
    queries.push_back(std::move(q));
  });
  return queries;
}

std::vector<StsPair> load_sts_jsonl(const std::string& path) {
  std::vector<StsPair> pairs;
  for_each_jsonl(path, [&](const json& j, size_t line) {
    StsPair p;
    p.s1 = require_string(j, "s1", path, line);
    p.s2 = require_string(j, "s2", path, line);
    if (!j.contains("score") || !j.at("score").is_number()) {
      ingest_error(path, line, "missing numeric field \"score\"");
    }
    p.score = j.at("score").get<double>();
    pairs.push_back(std::move(p));
  });
  return pairs;
}

RunQrels load_qrels_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  RunQrels qrels;
  std::string line;
  size_t line_no = 0;
  size_t records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string qid, did, rel;
    if (!std::getline(row, qid, '\t') || !std::getline(row, did, '\t') || !std::getline(row, rel, '\t')) {
      ingest_error(path, line_no, "expected query-id<TAB>doc-id<TAB>relevance");
    }
    if (qid.empty() || did.empty()) ingest_error(path, line_no, "empty id");
    if (rel != "0" && rel != "1") ingest_error(path, line_no, "relevance must be 0 or 1, got " + rel);
    if (rel == "1") qrels[qid].insert(did);
    ++records;
  }
  if (records == 0) throw std::runtime_error(path + ": no records");
  return qrels;
}

std::vector<TrainExample> build_train_pairs(const std::vector<QueryRec>& queries,
                                            const std::vector<CorpusDoc>& corpus,
                                            const RunQrels& qrels) {
  std::map<std::string, const CorpusDoc*> by_id;
  for (const auto& d : corpus) by_id.emplace(d.id, &d);
  std::vector<TrainExample> pairs;
  for (const auto& q : queries) {
    auto it = qrels.find(q.id);
    if (it == qrels.end() || it->second.empty()) {
      throw std::runtime_error("build_train_pairs: query " + q.id + " has no relevant documents");
    }
    for (const auto& did : it->second) {
      auto doc = by_id.find(did);
      if (doc == by_id.end()) {
        throw std::runtime_error("build_train_pairs: qrels reference unknown doc " + did);
      }
      pairs.push_back({q.text, doc->second->text});
    }
  }
  return pairs;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "objective,layer,dim,metric,value,seed\n";
  char buf[64];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.value);
    out += r.objective + "," + std::to_string(r.layer) + "," + std::to_string(r.dim) + "," + r.metric +
           "," + buf + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  write_text_file(path, sweep_csv(result));
}

std::string sweep_markdown(const SweepResult& result) {
  // collect grid per metric
  std::map<std::string, std::map<std::pair<int, int>, double>> metrics;
  std::set<int> layers, dims;
  for (const auto& r : result.rows) {
    metrics[r.metric][{r.layer, r.dim}] = r.value;
    layers.insert(r.layer);
    dims.insert(r.dim);
  }
  std::ostringstream out;
  char buf[64];
  for (const auto& [metric, cells] : metrics) {
    out << "## " << metric << "\n\n| layer \\ dim |";
    for (int k : dims) out << " " << k << " |";
    out << "\n|---|";
    for (size_t i = 0; i < dims.size(); ++i) out << "---|";
    out << "\n";
    for (int l : layers) {
      out << "| " << l << " |";
      for (int k : dims) {
        auto it = cells.find({l, k});
        if (it == cells.end()) {
          out << " - |";
        } else {
          std::snprintf(buf, sizeof(buf), "%.4f", it->second);
          out << " " << buf << " |";
        }
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace mse2d
