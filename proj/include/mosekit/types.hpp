#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace mosekit {

// A text unit tagged with its repository and language. The atom of corpora,
// packing and dedup.
struct Snippet {
  std::string id;
  std::string repo_id;
  std::string lang;
  std::string text;
};

inline void to_json(nlohmann::json& j, const Snippet& s) {
  j = nlohmann::json{{"id", s.id}, {"repo_id", s.repo_id}, {"lang", s.lang}, {"text", s.text}};
}
inline void from_json(const nlohmann::json& j, Snippet& s) {
  j.at("id").get_to(s.id);
  j.at("repo_id").get_to(s.repo_id);
  j.at("lang").get_to(s.lang);
  j.at("text").get_to(s.text);
}

struct CodeSide {
  std::string text;
  std::string lang;
};

inline void to_json(nlohmann::json& j, const CodeSide& c) {
  j = nlohmann::json{{"text", c.text}, {"lang", c.lang}};
}
inline void from_json(const nlohmann::json& j, CodeSide& c) {
  j.at("text").get_to(c.text);
  j.at("lang").get_to(c.lang);
}

// (natural-language description, code-A, code-B) with distinct language tags.
struct Triplet {
  std::string id;
  std::string nl;
  CodeSide code_a;
  CodeSide code_b;
};

inline void to_json(nlohmann::json& j, const Triplet& t) {
  j = nlohmann::json{{"id", t.id}, {"nl", t.nl}, {"code_a", t.code_a}, {"code_b", t.code_b}};
}
inline void from_json(const nlohmann::json& j, Triplet& t) {
  j.at("id").get_to(t.id);
  j.at("nl").get_to(t.nl);
  j.at("code_a").get_to(t.code_a);
  j.at("code_b").get_to(t.code_b);
}

using DuplicateMap = std::vector<std::pair<std::string, std::string>>;  // (original, copy)

}  // namespace mosekit
