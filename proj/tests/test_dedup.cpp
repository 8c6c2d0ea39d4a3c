#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mosekit/datagen.hpp"
#include "mosekit/dedup.hpp"
#include "mosekit/rng.hpp"

using namespace mosekit;
using namespace mosekit::dedup;

namespace {

// A shingle-like set with |intersection| = shared and `uniq` extra elements
// per side, so the exact Jaccard is shared / (shared + 2 * uniq).
std::pair<ShingleSet, ShingleSet> make_pair_sets(int shared, int uniq, Rng& rng) {
  auto word = [&rng]() {
    std::string s(5, 'a');
    for (auto& c : s) c = static_cast<char>('a' + rng.below(26));
    return s;
  };
  ShingleSet a, b;
  while (static_cast<int>(a.size()) < shared) {
    const std::string w = word();
    a.insert(w);
    b.insert(w);
  }
  while (static_cast<int>(a.size()) < shared + uniq) a.insert("l" + word());
  while (static_cast<int>(b.size()) < shared + uniq) b.insert("r" + word());
  return {a, b};
}

}  // namespace

TEST_CASE("shingling produces sliding character 5-grams") {
  CHECK(shingle("abcde") == ShingleSet{"abcde"});
  CHECK(shingle("abcdef") == ShingleSet{"abcde", "bcdef"});
  CHECK(shingle("abcd").empty());
  CHECK(shingle("").empty());
  // Repeats collapse: the two windows are identical.
  CHECK(shingle("ababab", 5).size() == 2);
}

TEST_CASE("shingles count code points rather than bytes") {
  // Five two-byte code points form exactly one 5-gram.
  const std::string s = "αβγδε";
  const auto sh = shingle(s);
  REQUIRE(sh.size() == 1);
  CHECK(*sh.begin() == s);
}

TEST_CASE("exact jaccard handles the edge cases") {
  const ShingleSet a = {"aaaaa", "bbbbb"}, b = {"bbbbb", "ccccc"};
  CHECK(exact_jaccard(a, a) == 1.0);
  CHECK(exact_jaccard(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(exact_jaccard({}, {}) == 1.0);
  CHECK(exact_jaccard(a, {}) == 0.0);
}

TEST_CASE("identical sets get identical signatures and estimate 1") {
  const auto sh = shingle("let a := 1 ; emit a ;");
  const auto s1 = minhash(sh), s2 = minhash(sh);
  CHECK(s1.values == s2.values);
  CHECK(est_jaccard(s1, s2) == 1.0);
}

TEST_CASE("minhash rejects empty sets and mismatched signatures") {
  CHECK_THROWS(minhash({}));
  const auto a = minhash(shingle("abcdefgh"), 256);
  const auto b = minhash(shingle("abcdefgh"), 128);
  CHECK_THROWS(est_jaccard(a, b));
}

TEST_CASE("disjoint sets estimate near zero") {
  Rng rng(1);
  auto [a, b] = make_pair_sets(0, 100, rng);
  CHECK(est_jaccard(minhash(a), minhash(b)) < 0.05);
}

TEST_CASE("estimates are symmetric") {
  Rng rng(2);
  auto [a, b] = make_pair_sets(40, 20, rng);
  const auto sa = minhash(a), sb = minhash(b);
  CHECK(est_jaccard(sa, sb) == est_jaccard(sb, sa));
}

TEST_CASE("estimate error stays within the 3-sigma band on seeded pairs") {
  // 256 permutations give sigma <= 0.5/16, so a 0.09 band is ~3 sigma.
  Rng rng(123);
  int within = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    // Exact Jaccard in [0.5, 0.9]: j = s/(s+2u).
    const int uniq = 5 + static_cast<int>(rng.below(21));
    const double j = 0.5 + 0.4 * rng.uniform();
    const int shared = static_cast<int>(std::lround(2.0 * uniq * j / (1.0 - j)));
    auto [a, b] = make_pair_sets(shared, uniq, rng);
    const double exact = exact_jaccard(a, b);
    CHECK(exact >= 0.45);
    const double est = est_jaccard(minhash(a, 256, 9), minhash(b, 256, 9));
    within += (std::abs(est - exact) <= 0.09);
  }
  CHECK(within >= 95);
}

TEST_CASE("the estimator is unbiased at jaccard one half") {
  Rng rng(77);
  double sum = 0;
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    auto [a, b] = make_pair_sets(30, 15, rng);  // j = 30/60 = 0.5
    sum += est_jaccard(minhash(a, 256, i), minhash(b, 256, i));
  }
  CHECK(std::abs(sum / n - 0.5) < 0.02);
}

TEST_CASE("dedup keeps everything when no pair is near-duplicate") {
  const auto corpus = datagen::gen_corpus(5, 4, 8, datagen::kToyLangs);
  const auto res = lsh_dedup(corpus);
  CHECK(res.removed.empty());
  CHECK(res.kept.size() == corpus.size());
}

TEST_CASE("byte-identical snippets collapse onto the smallest id") {
  std::vector<Snippet> corpus = {{"b", "r0", "toyA", "x = 1\nshow x\n"},
                                 {"a", "r0", "toyA", "x = 1\nshow x\n"},
                                 {"c", "r1", "toyA", "completely different body text here\n"}};
  const auto res = lsh_dedup(corpus);
  REQUIRE(res.removed.size() == 1);
  CHECK(res.removed[0].first == "b");
  CHECK(res.removed[0].second == "a");
  REQUIRE(res.kept.size() == 2);
  CHECK(res.kept[0].id == "a");
  CHECK(res.kept[1].id == "c");
}

TEST_CASE("planted near-duplicates are removed and nothing else is") {
  const auto corpus = datagen::gen_corpus(9, 6, 10, datagen::kToyLangs);
  const auto planted = datagen::plant_near_duplicates(corpus, 0.2, 42);
  const auto res = lsh_dedup(planted.corpus);

  // Every planted copy is caught.
  std::set<std::string> removed_ids;
  for (const auto& [rem, kept] : res.removed) {
    (void)kept;
    removed_ids.insert(rem);
  }
  for (const auto& [orig, copy] : planted.planted) {
    (void)orig;
    CHECK(removed_ids.count(copy) == 1);
  }

  // Removed pairs really are near-duplicates: exact Jaccard >= 0.5.
  std::map<std::string, std::string> text_of;
  for (const auto& s : planted.corpus) text_of[s.id] = s.text;
  for (const auto& [rem, kept] : res.removed) {
    const double j = exact_jaccard(shingle(text_of.at(rem)), shingle(text_of.at(kept)));
    CHECK(j >= 0.5);
  }
}

TEST_CASE("dedup is idempotent") {
  const auto corpus = datagen::gen_corpus(9, 6, 10, datagen::kToyLangs);
  const auto planted = datagen::plant_near_duplicates(corpus, 0.2, 42);
  const auto once = lsh_dedup(planted.corpus);
  const auto twice = lsh_dedup(once.kept);
  CHECK(twice.removed.empty());
  CHECK(twice.kept.size() == once.kept.size());
}

TEST_CASE("triplet dedup drops rows whose code column repeats") {
  auto triplets = datagen::gen_triplets(3, 20, datagen::kToyLangs);
  auto clone = triplets[5];
  clone.id = "t_clone";
  triplets.push_back(clone);
  const auto res = dedup_triplets(triplets);
  REQUIRE(res.removed_ids.size() == 1);
  CHECK(res.removed_ids[0] == "t_clone");
  CHECK(res.kept.size() == 20);
}

TEST_CASE("signature files round trip") {
  std::map<std::string, MinHashSignature> sigs;
  sigs["a"] = minhash(shingle("let a := 1 ; emit a ;"));
  sigs["b"] = minhash(shingle("repeat 3 { emit q }"));
  const std::string path = "sig_roundtrip_test.bin";
  save_signatures(path, sigs);
  const auto back = load_signatures(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == 2);
  CHECK(back.at("a").values == sigs.at("a").values);
  CHECK(back.at("b").values == sigs.at("b").values);
  CHECK(back.at("a").n_perm == sigs.at("a").n_perm);
}
