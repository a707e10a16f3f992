#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace tablemetric {

// Bidirectional token<->id map with dense ids and two reserved entries.
// The metric vocabulary stores whole metric-type names (one entry per gold
// list element, possibly multi-word); the general vocabulary stores word
// tokens of captions and header names.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  explicit Vocabulary(bool is_metric_vocab = false)
      : is_metric_(is_metric_vocab) {
    add("<pad>");
    add("<unk>");
  }

  // Returns the id, inserting the token if new.
  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  // Id of the token, or kUnk when absent.
  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }

  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_metric_vocab() const { return is_metric_; }

  // Entries beyond the reserved pair, in id order.
  std::vector<std::string> entries() const {
    return {tokens_.begin() + 2, tokens_.end()};
  }

  static Vocabulary from_entries(const std::vector<std::string>& entries,
                                 bool is_metric_vocab) {
    Vocabulary v(is_metric_vocab);
    for (const auto& t : entries) v.add(t);
    return v;
  }

 private:
  bool is_metric_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace tablemetric
