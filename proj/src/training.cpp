#include "mosekit/training.hpp"

#include <cctype>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mosekit::train {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string fresh_name(Rng& rng, const std::set<std::string>& taken) {
  static const char* alpha = "abcdefghijklmnopqrstuvwxyz0123456789";
  for (;;) {
    const size_t len = 3 + rng.below(3);
    std::string s;
    s.push_back(alpha[rng.below(26)]);  // leading letter keeps it identifier-like
    while (s.size() < len) s.push_back(alpha[rng.below(36)]);
    if (!taken.count(s)) return s;
  }
}

}  // namespace

std::string augment_code(const std::string& code, Rng& rng) {
  // whitespace-delimited words, original spacing preserved
  std::vector<std::pair<std::string, bool>> parts;  // (text, is_word)
  size_t i = 0;
  while (i < code.size()) {
    const bool word = !is_space(code[i]);
    size_t j = i;
    while (j < code.size() && is_space(code[j]) != word) ++j;
    parts.emplace_back(code.substr(i, j - i), word);
    i = j;
  }

  std::unordered_map<std::string, int> counts;
  std::set<std::string> taken;
  for (const auto& [text, word] : parts)
    if (word) {
      ++counts[text];
      taken.insert(text);
    }

  // Deterministic replacement order: first occurrence in the snippet.
  std::unordered_map<std::string, std::string> renames;
  for (const auto& [text, word] : parts) {
    if (!word || renames.count(text)) continue;
    if (counts[text] > 2 && text.size() >= 3) {
      const std::string repl = fresh_name(rng, taken);
      taken.insert(repl);
      renames[text] = repl;
    }
  }

  std::string out;
  out.reserve(code.size());
  for (const auto& [text, word] : parts) {
    auto it = word ? renames.find(text) : renames.end();
    out += it != renames.end() ? it->second : text;
  }
  return out;
}

}  // namespace mosekit::train
