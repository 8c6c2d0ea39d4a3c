#include "mosekit/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace mosekit::tok {

Vocab::Vocab() {
  for (const char* s : kSpecialNames) add(s);
}

void Vocab::add(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocab: id out of range");
  return id_to_token_[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("Vocab::save: cannot open " + path);
  f << nlohmann::json(id_to_token_).dump() << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("Vocab::load: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return from_tokens(j.get<std::vector<std::string>>());
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (int i = 0; i < kNumSpecials; ++i) {
    if (static_cast<size_t>(i) >= tokens.size() || tokens[i] != kSpecialNames[i])
      throw std::runtime_error("Vocab::from_tokens: missing special tokens");
  }
  for (size_t i = kNumSpecials; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = text[i];
    if (std::isspace(c)) {
      ++i;
    } else if (is_word(c)) {
      size_t j = i;
      while (j < text.size() && is_word(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    } else {
      out.push_back(text.substr(i, 1));
      ++i;
    }
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& texts, int max_size) {
  if (max_size < kNumSpecials + 1) throw std::invalid_argument("build_vocab: max_size too small");
  std::map<std::string, long long> freq;  // ordered map gives the lexicographic tiebreak
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++freq[w];

  std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  for (const auto& [token, count] : ranked) {
    (void)count;
    if (v.size() >= max_size) break;
    v.add(token);
  }
  return v;
}

Vocab build_vocab(const std::vector<Snippet>& corpus, int max_size) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& s : corpus) texts.push_back(s.text);
  return build_vocab(texts, max_size);
}

std::vector<int> encode(const Vocab& v, const std::string& text) {
  std::vector<int> ids;
  // split_words never yields a bracketed special name, so ids stay >= kNumSpecials or kUnk.
  for (const auto& w : split_words(text)) ids.push_back(v.id_of(w));
  return ids;
}

std::string decode(const Vocab& v, const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += v.token_of(ids[i]);
  }
  return out;
}

}  // namespace mosekit::tok
