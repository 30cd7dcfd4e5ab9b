#include "mse2d/vocab.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mse2d {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) {
    throw std::invalid_argument("Vocabulary: needs at least PAD and UNK entries (ids 0/1)");
  }
  for (size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i));
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Vocabulary: cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Vocabulary: cannot write " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary: id out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_seq_len) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char ch : text) {
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  std::istringstream stream(lowered);
  std::vector<int> ids;
  std::string tok;
  while (stream >> tok) {
    ids.push_back(vocab.id_of(tok));
    if (static_cast<int>(ids.size()) == max_seq_len) break;
  }
  if (ids.empty()) ids.push_back(Vocabulary::kUnkId);
  return ids;
}

}  // namespace mse2d
