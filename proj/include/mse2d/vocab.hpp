#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace mse2d {

// Whitespace-token vocabulary. Ids 0 and 1 are reserved for PAD and UNK;
// the vocabulary file stores one token per line, line number = id.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id_of(const std::string& token) const;
  const std::string& token(int id) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased whitespace tokens mapped through the vocabulary; unknowns map
// to UNK, empty input yields a single UNK, output is truncated to max_seq_len.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_seq_len);

}  // namespace mse2d
