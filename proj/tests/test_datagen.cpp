#include <doctest.h>

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mosekit/datagen.hpp"
#include "mosekit/dedup.hpp"

using namespace mosekit;
using namespace mosekit::datagen;

namespace {

std::set<std::string> word_set(const std::string& text) {
  std::set<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.insert(w);
  return out;
}

double overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  int both = 0;
  for (const auto& w : a) both += b.count(w);
  return static_cast<double>(both) / static_cast<double>(a.size() + b.size() - both);
}

}  // namespace

TEST_CASE("corpus generation is deterministic and well-formed") {
  const auto a = gen_corpus(7, 4, 8, kToyLangs);
  const auto b = gen_corpus(7, 4, 8, kToyLangs);
  REQUIRE(a.size() == 32);
  std::set<std::string> ids, repos;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].text == b[i].text);
    CHECK(!a[i].text.empty());
    ids.insert(a[i].id);
    repos.insert(a[i].repo_id);
  }
  CHECK(ids.size() == 32);
  CHECK(repos.size() == 4);
}

TEST_CASE("zero repositories give an empty corpus") {
  CHECK(gen_corpus(7, 0, 8, kToyLangs).empty());
}

TEST_CASE("corpus generation validates its arguments") {
  CHECK_THROWS(gen_corpus(7, -1, 8, kToyLangs));
  CHECK_THROWS(gen_corpus(7, 2, 0, kToyLangs));
  CHECK_THROWS(gen_corpus(7, 2, 2, {}));
}

TEST_CASE("rendering is deterministic and rejects unknown languages") {
  ProgramSpec spec{{"abc", "def", "ghi"}, {1, 2, 3}, 4, 1};
  CHECK(render_program(spec, "toyA") == render_program(spec, "toyA"));
  CHECK_THROWS(render_program(spec, "python"));
  ProgramSpec bad{{"abc", "def"}, {1, 2}, 4, 1};
  CHECK_THROWS(render_program(bad, "toyA"));
}

TEST_CASE("the same program renders equivalently across languages") {
  ProgramSpec spec{{"abc", "def", "ghi"}, {10, 20, 30}, 5, 2};
  for (const auto& lang : kToyLangs) {
    const std::string text = render_program(spec, lang);
    // Identifiers, literals, and the loop count all surface in every language.
    for (const auto& v : spec.vars) CHECK(text.find(v) != std::string::npos);
    CHECK(text.find("10") != std::string::npos);
    CHECK(text.find("30") != std::string::npos);
    CHECK(text.find("5") != std::string::npos);
  }
  // Different surface syntax per language.
  CHECK(render_program(spec, "toyA") != render_program(spec, "toyB"));
  CHECK(render_program(spec, "toyB") != render_program(spec, "toyC"));
}

TEST_CASE("descriptions mention the variables and the operation") {
  ProgramSpec spec{{"abc", "def", "ghi"}, {10, 20, 30}, 5, 0};
  const std::string nl = nl_description(spec);
  CHECK(nl.find("abc") != std::string::npos);
  CHECK(nl.find("sum") != std::string::npos);
  spec.op_kind = 2;
  CHECK(nl_description(spec).find("product") != std::string::npos);
}

TEST_CASE("same-repo snippets share identifiers more than cross-repo ones") {
  const auto corpus = gen_corpus(13, 8, 8, kToyLangs);
  // Syntax keywords appear everywhere; drop words common to most snippets so
  // the comparison sees the repo-local identifier pools.
  std::map<std::string, int> df;
  for (const auto& s : corpus)
    for (const auto& w : word_set(s.text)) ++df[w];
  std::vector<std::set<std::string>> idents;
  for (const auto& s : corpus) {
    std::set<std::string> keep;
    for (const auto& w : word_set(s.text))
      if (w.size() >= 3 && df[w] <= static_cast<int>(corpus.size()) / 2) keep.insert(w);
    idents.push_back(keep);
  }
  double same = 0, cross = 0;
  int n_same = 0, n_cross = 0;
  for (size_t i = 0; i < corpus.size(); ++i)
    for (size_t j = i + 1; j < corpus.size(); ++j) {
      if (idents[i].empty() || idents[j].empty()) continue;
      const double o = overlap(idents[i], idents[j]);
      if (corpus[i].repo_id == corpus[j].repo_id) {
        same += o;
        ++n_same;
      } else {
        cross += o;
        ++n_cross;
      }
    }
  CHECK(same / n_same > cross / n_cross + 0.05);
}

TEST_CASE("triplet generation is deterministic with cross-language pairs") {
  const auto a = gen_triplets(3, 50, kToyLangs);
  const auto b = gen_triplets(3, 50, kToyLangs);
  REQUIRE(a.size() == 50);
  std::set<std::string> ids;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].nl == b[i].nl);
    CHECK(a[i].code_a.text == b[i].code_a.text);
    CHECK(a[i].code_a.lang != a[i].code_b.lang);
    CHECK(!a[i].nl.empty());
    ids.insert(a[i].id);
  }
  CHECK(ids.size() == 50);
}

TEST_CASE("triplet generation validates its arguments") {
  CHECK(gen_triplets(3, 0, kToyLangs).empty());
  CHECK_THROWS(gen_triplets(3, -1, kToyLangs));
  CHECK_THROWS(gen_triplets(3, 5, {"toyA"}));
}

TEST_CASE("the documented full-scale triplet count is on record") {
  CHECK(kReferenceTripletCount == 1071367);
}

TEST_CASE("planting near-duplicates keeps them above the detection band") {
  const auto corpus = gen_corpus(21, 5, 10, kToyLangs);
  const auto res = plant_near_duplicates(corpus, 0.1, 8);
  CHECK(res.planted.size() == 5);
  CHECK(res.corpus.size() == corpus.size() + 5);

  std::map<std::string, std::string> text_of;
  for (const auto& s : res.corpus) text_of[s.id] = s.text;
  for (const auto& [orig, copy] : res.planted) {
    const double j =
        dedup::exact_jaccard(dedup::shingle(text_of.at(orig)), dedup::shingle(text_of.at(copy)));
    CHECK(j >= 0.7);
  }
}

TEST_CASE("a zero plant rate changes nothing") {
  const auto corpus = gen_corpus(21, 3, 4, kToyLangs);
  const auto res = plant_near_duplicates(corpus, 0.0, 8);
  CHECK(res.planted.empty());
  CHECK(res.corpus.size() == corpus.size());
  CHECK_THROWS(plant_near_duplicates(corpus, 1.5, 8));
}
