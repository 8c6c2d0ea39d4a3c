#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mosekit/types.hpp"

namespace mosekit::tok {

// Reserved ids, fixed order.
enum SpecialId : int { kPad = 0, kUnk = 1, kMask = 2, kSep = 3, kCls = 4 };
inline constexpr int kNumSpecials = 5;
inline const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[UNK]", "[MASK]", "[SEP]", "[CLS]"};

class Vocab {
 public:
  Vocab();  // specials only

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;  // throws on out-of-range
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  // Tokens in id order, specials first.
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  void save(const std::string& path) const;  // JSON array of tokens in id order
  static Vocab load(const std::string& path);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  friend Vocab build_vocab(const std::vector<std::string>&, int);
  void add(const std::string& token);
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Whitespace-and-punctuation word split: alnum/underscore runs are words,
// every other non-space character is its own token.
std::vector<std::string> split_words(const std::string& text);

// Word-level vocabulary ranked by frequency then lexicographic order.
Vocab build_vocab(const std::vector<std::string>& texts, int max_size);
Vocab build_vocab(const std::vector<Snippet>& corpus, int max_size);

std::vector<int> encode(const Vocab& v, const std::string& text);
std::string decode(const Vocab& v, const std::vector<int>& ids);

}  // namespace mosekit::tok
