#include "mosekit/dedup.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "mosekit/rng.hpp"

namespace mosekit::dedup {

namespace {

constexpr int kBands = 32;
constexpr int kRows = 8;

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Byte offsets of UTF-8 code point starts, plus the end offset.
std::vector<size_t> codepoint_starts(const std::string& text) {
  std::vector<size_t> starts;
  for (size_t i = 0; i < text.size();) {
    starts.push_back(i);
    unsigned char c = text[i];
    if (c < 0x80) i += 1;
    else if ((c >> 5) == 0x6) i += 2;
    else if ((c >> 4) == 0xe) i += 3;
    else if ((c >> 3) == 0x1e) i += 4;
    else i += 1;  // invalid byte, treat as one code point
  }
  starts.push_back(text.size());
  return starts;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

ShingleSet shingle(const std::string& text, int k) {
  if (k < 1) throw std::invalid_argument("shingle: k must be >= 1");
  ShingleSet out;
  const auto starts = codepoint_starts(text);
  const int n_cp = static_cast<int>(starts.size()) - 1;
  for (int i = 0; i + k <= n_cp; ++i) {
    out.insert(text.substr(starts[i], starts[i + k] - starts[i]));
  }
  return out;
}

MinHashSignature minhash(const ShingleSet& s, int n_perm, uint64_t seed) {
  if (s.empty()) throw std::invalid_argument("minhash: empty shingle set");
  if (n_perm < 1) throw std::invalid_argument("minhash: n_perm must be >= 1");
  MinHashSignature sig;
  sig.n_perm = static_cast<uint32_t>(n_perm);
  sig.seed = seed;
  // Seeded universal hashing over 64-bit space: h_i(x) = a_i * x + b_i.
  Rng rng(seed);
  std::vector<uint64_t> a(n_perm), b(n_perm);
  for (int i = 0; i < n_perm; ++i) {
    a[i] = rng.next() | 1ull;
    b[i] = rng.next();
  }
  sig.values.assign(n_perm, UINT64_MAX);
  for (const auto& sh : s) {
    const uint64_t h = fnv1a(sh);
    for (int i = 0; i < n_perm; ++i) {
      const uint64_t v = a[i] * h + b[i];
      if (v < sig.values[i]) sig.values[i] = v;
    }
  }
  return sig;
}

double est_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.n_perm != b.n_perm || a.seed != b.seed)
    throw std::invalid_argument("est_jaccard: signatures from different families");
  int agree = 0;
  for (uint32_t i = 0; i < a.n_perm; ++i)
    if (a.values[i] == b.values[i]) ++agree;
  return static_cast<double>(agree) / a.n_perm;
}

double exact_jaccard(const ShingleSet& a, const ShingleSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

DedupResult lsh_dedup(const std::vector<Snippet>& snippets, double threshold, int n_perm,
                      uint64_t seed) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("lsh_dedup: threshold must be in (0,1]");
  const int n = static_cast<int>(snippets.size());
  std::vector<MinHashSignature> sigs(n);
  std::vector<bool> has_sig(n, false);
  for (int i = 0; i < n; ++i) {
    auto sh = shingle(snippets[i].text);
    if (sh.empty()) continue;  // too short to compare, treated as unique
    sigs[i] = minhash(sh, n_perm, seed);
    has_sig[i] = true;
  }

  const int rows = (n_perm >= kBands * kRows) ? kRows : std::max(1, n_perm / kBands);
  const int bands = n_perm / rows;

  UnionFind uf(n);
  std::unordered_map<uint64_t, std::vector<int>> buckets;
  buckets.reserve(static_cast<size_t>(n) * bands);
  for (int i = 0; i < n; ++i) {
    if (!has_sig[i]) continue;
    for (int band = 0; band < bands; ++band) {
      uint64_t h = 0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(band);
      for (int r = 0; r < rows; ++r) {
        h ^= sigs[i].values[band * rows + r];
        h *= 0x100000001b3ull;
      }
      auto& bucket = buckets[h];
      for (int j : bucket) {
        if (uf.find(i) == uf.find(j)) continue;
        if (est_jaccard(sigs[i], sigs[j]) >= threshold) uf.unite(i, j);
      }
      bucket.push_back(i);
    }
  }

  // Within each cluster the lexicographically smallest id is kept.
  std::unordered_map<int, int> keeper;  // root -> index of smallest id
  for (int i = 0; i < n; ++i) {
    const int root = uf.find(i);
    auto it = keeper.find(root);
    if (it == keeper.end() || snippets[i].id < snippets[it->second].id) keeper[root] = i;
  }

  DedupResult out;
  for (int i = 0; i < n; ++i) {
    const int keep = keeper[uf.find(i)];
    if (keep == i) {
      out.kept.push_back(snippets[i]);
    } else {
      out.removed.emplace_back(snippets[i].id, snippets[keep].id);
    }
  }
  return out;
}

TripletDedupResult dedup_triplets(const std::vector<Triplet>& triplets, double threshold,
                                  int n_perm, uint64_t seed) {
  auto column_removed = [&](auto text_of) {
    std::vector<Snippet> col;
    col.reserve(triplets.size());
    for (const auto& t : triplets) col.push_back({t.id, "", "", text_of(t)});
    std::set<std::string> removed;
    for (const auto& [rid, kid] : lsh_dedup(col, threshold, n_perm, seed).removed)
      removed.insert(rid);
    return removed;
  };
  const auto rem_a = column_removed([](const Triplet& t) { return t.code_a.text; });
  const auto rem_b = column_removed([](const Triplet& t) { return t.code_b.text; });

  TripletDedupResult out;
  for (const auto& t : triplets) {
    if (rem_a.count(t.id) || rem_b.count(t.id)) {
      out.removed_ids.push_back(t.id);
    } else {
      out.kept.push_back(t);
    }
  }
  return out;
}

static constexpr char kSigMagic[8] = {'M', 'O', 'S', 'E', 'S', 'I', 'G', '1'};

void save_signatures(const std::string& path, const std::map<std::string, MinHashSignature>& sigs) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_signatures: cannot open " + path);
  f.write(kSigMagic, 8);
  uint32_t n_perm = sigs.empty() ? 0 : sigs.begin()->second.n_perm;
  uint64_t seed = sigs.empty() ? 0 : sigs.begin()->second.seed;
  uint64_t count = sigs.size();
  f.write(reinterpret_cast<const char*>(&n_perm), 4);
  f.write(reinterpret_cast<const char*>(&seed), 8);
  f.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& [id, sig] : sigs) {
    if (sig.n_perm != n_perm || sig.seed != seed)
      throw std::invalid_argument("save_signatures: mixed signature families");
    uint32_t len = static_cast<uint32_t>(id.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(id.data(), len);
    f.write(reinterpret_cast<const char*>(sig.values.data()),
            static_cast<std::streamsize>(sig.values.size() * 8));
  }
}

std::map<std::string, MinHashSignature> load_signatures(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_signatures: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kSigMagic, 8) != 0)
    throw std::runtime_error("load_signatures: bad magic in " + path);
  uint32_t n_perm = 0;
  uint64_t seed = 0, count = 0;
  f.read(reinterpret_cast<char*>(&n_perm), 4);
  f.read(reinterpret_cast<char*>(&seed), 8);
  f.read(reinterpret_cast<char*>(&count), 8);
  std::map<std::string, MinHashSignature> out;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string id(len, '\0');
    f.read(id.data(), len);
    MinHashSignature sig;
    sig.n_perm = n_perm;
    sig.seed = seed;
    sig.values.resize(n_perm);
    f.read(reinterpret_cast<char*>(sig.values.data()), static_cast<std::streamsize>(n_perm) * 8);
    if (!f) throw std::runtime_error("load_signatures: truncated file " + path);
    out.emplace(std::move(id), std::move(sig));
  }
  return out;
}

}  // namespace mosekit::dedup
