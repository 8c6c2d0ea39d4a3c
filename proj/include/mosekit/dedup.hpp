#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mosekit/types.hpp"

namespace mosekit::dedup {

// Set of contiguous character k-grams (code points, not bytes).
using ShingleSet = std::set<std::string>;

struct MinHashSignature {
  std::vector<uint64_t> values;  // one minimum per permutation
  uint32_t n_perm = 0;
  uint64_t seed = 0;
};

ShingleSet shingle(const std::string& text, int k = 5);

MinHashSignature minhash(const ShingleSet& s, int n_perm = 256, uint64_t seed = 0);

// Fraction of positions where the signatures agree.
double est_jaccard(const MinHashSignature& a, const MinHashSignature& b);

double exact_jaccard(const ShingleSet& a, const ShingleSet& b);

struct DedupResult {
  std::vector<Snippet> kept;                                   // input order
  std::vector<std::pair<std::string, std::string>> removed;    // (removed_id, kept_id)
};

// Banded LSH over MinHash signatures (32 bands x 8 rows), candidates verified
// with est_jaccard >= threshold. The lexicographically smallest id of each
// duplicate cluster survives.
DedupResult lsh_dedup(const std::vector<Snippet>& snippets, double threshold = 0.7,
                      int n_perm = 256, uint64_t seed = 0);

struct TripletDedupResult {
  std::vector<Triplet> kept;
  std::vector<std::string> removed_ids;
};

// Near-dedup over both code columns: a triplet is dropped when either column
// clusters with an earlier triplet's corresponding column.
TripletDedupResult dedup_triplets(const std::vector<Triplet>& triplets, double threshold = 0.7,
                                  int n_perm = 256, uint64_t seed = 0);

// Signature cache: binary file, header (magic, n_perm, seed), fixed-width records.
void save_signatures(const std::string& path, const std::map<std::string, MinHashSignature>& sigs);
std::map<std::string, MinHashSignature> load_signatures(const std::string& path);

}  // namespace mosekit::dedup
