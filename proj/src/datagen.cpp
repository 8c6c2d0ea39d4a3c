#include "mosekit/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mosekit/dedup.hpp"
#include "mosekit/rng.hpp"

namespace mosekit::datagen {

namespace {

constexpr int kGlobalPoolSize = 512;
constexpr int kRepoPoolSize = 16;

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

std::string pool_name(int i) {
  std::string s(3, 'a');
  s[0] = static_cast<char>('a' + i % 26);
  s[1] = static_cast<char>('a' + (i / 26) % 26);
  s[2] = static_cast<char>('a' + (i / 676) % 26);
  return s;
}

// Words the toy grammars own; never treated as renameable identifiers.
const std::unordered_set<std::string> kKeywords = {
    "show", "loop",  "print", "note", "let",   "emit", "repeat", "tag", "def",
    "out",  "times", "list",  "plus", "minus", "add",  "sub",    "mul"};

const char* kOpSymA[] = {"+", "-", "*"};
const char* kOpWordB[] = {"plus", "minus", "times"};
const char* kOpWordC[] = {"add", "sub", "mul"};
const char* kOpName[] = {"sum", "difference", "product"};

ProgramSpec random_spec(Rng& rng, const std::vector<std::string>& id_pool) {
  ProgramSpec spec;
  const int n_vars = 4 + static_cast<int>(rng.below(2));
  std::set<int> chosen;
  while (static_cast<int>(chosen.size()) < n_vars)
    chosen.insert(static_cast<int>(rng.below(id_pool.size())));
  // Random order, not pool order, so same-repo snippets vary.
  std::vector<int> order(chosen.begin(), chosen.end());
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (int idx : order) spec.vars.push_back(id_pool[idx]);
  for (int i = 0; i < n_vars; ++i) spec.lits.push_back(static_cast<int>(rng.below(100)));
  spec.loop_n = 2 + static_cast<int>(rng.below(8));
  spec.op_kind = static_cast<int>(rng.below(3));
  return spec;
}

void append_note(std::ostringstream& os, const char* word, const ProgramSpec& s,
                 const char* terminator) {
  os << word;
  for (const auto& v : s.vars) os << " " << v;
  for (int l : s.lits) os << " " << l;
  os << " " << s.loop_n << terminator << "\n";
}

}  // namespace

std::string render_program(const ProgramSpec& spec, const std::string& lang) {
  if (spec.vars.size() < 3 || spec.vars.size() != spec.lits.size())
    throw std::invalid_argument("render_program: malformed spec");
  const auto& v = spec.vars;
  const auto& l = spec.lits;
  std::ostringstream os;
  if (lang == "toyA") {
    for (size_t i = 0; i < v.size(); ++i)
      os << v[i] << " = " << l[i] << "\nshow " << v[i] << "\n";
    os << v[0] << " = " << v[1] << " " << kOpSymA[spec.op_kind] << " " << v[2] << "\n";
    os << "loop " << spec.loop_n << " : show " << v[0] << "\n";
    append_note(os, "note", spec, "");
  } else if (lang == "toyB") {
    for (size_t i = 0; i < v.size(); ++i)
      os << "let " << v[i] << " := " << l[i] << " ;\nemit " << v[i] << " ;\n";
    os << "let " << v[0] << " := " << v[1] << " " << kOpWordB[spec.op_kind] << " " << v[2]
       << " ;\n";
    os << "repeat " << spec.loop_n << " { emit " << v[0] << " }\n";
    append_note(os, "tag", spec, " ;");
  } else if (lang == "toyC") {
    for (size_t i = 0; i < v.size(); ++i)
      os << "( def " << v[i] << " " << l[i] << " )\n( out " << v[i] << " )\n";
    os << "( def " << v[0] << " ( " << kOpWordC[spec.op_kind] << " " << v[1] << " " << v[2]
       << " ) )\n";
    os << "( times " << spec.loop_n << " ( out " << v[0] << " ) )\n";
    append_note(os, "( list", spec, " )");
  } else {
    throw std::invalid_argument("render_program: unsupported language '" + lang + "'");
  }
  return os.str();
}

std::string nl_description(const ProgramSpec& spec) {
  std::ostringstream os;
  os << "set";
  for (size_t i = 0; i < spec.vars.size(); ++i)
    os << " " << spec.vars[i] << " to " << spec.lits[i] << (i + 1 < spec.vars.size() ? " and" : "");
  os << " then compute " << spec.vars[0] << " as the " << kOpName[spec.op_kind] << " of "
     << spec.vars[1] << " and " << spec.vars[2] << " and print " << spec.vars[0] << " "
     << spec.loop_n << " times";
  return os.str();
}

std::vector<Snippet> gen_corpus(uint64_t seed, int n_repos, int snippets_per_repo,
                                const std::vector<std::string>& langs) {
  if (n_repos < 0) throw std::invalid_argument("gen_corpus: n_repos must be >= 0");
  if (n_repos > 0 && snippets_per_repo < 1)
    throw std::invalid_argument("gen_corpus: snippets_per_repo must be >= 1");
  if (langs.empty()) throw std::invalid_argument("gen_corpus: empty language list");

  std::vector<Snippet> corpus;
  corpus.reserve(static_cast<size_t>(n_repos) * snippets_per_repo);
  for (int r = 0; r < n_repos; ++r) {
    // Identifier pool shared by all snippets of this repo.
    Rng pool_rng(mix(seed, 0x1000 + r));
    std::set<int> pool_idx;
    while (static_cast<int>(pool_idx.size()) < kRepoPoolSize)
      pool_idx.insert(static_cast<int>(pool_rng.below(kGlobalPoolSize)));
    std::vector<std::string> pool;
    for (int i : pool_idx) pool.push_back(pool_name(i));

    char repo_id[16];
    std::snprintf(repo_id, sizeof repo_id, "repo%03d", r);
    for (int s = 0; s < snippets_per_repo; ++s) {
      Rng rng(mix(mix(seed, r), 0x2000 + s));
      ProgramSpec spec = random_spec(rng, pool);
      const std::string& lang = langs[rng.below(langs.size())];
      char id[24];
      std::snprintf(id, sizeof id, "r%03d_s%04d", r, s);
      corpus.push_back({id, repo_id, lang, render_program(spec, lang)});
    }
  }
  return corpus;
}

std::vector<Triplet> gen_triplets(uint64_t seed, int n, const std::vector<std::string>& langs) {
  if (n < 0) throw std::invalid_argument("gen_triplets: n must be >= 0");
  if (langs.size() < 2) throw std::invalid_argument("gen_triplets: need at least two languages");

  std::vector<std::string> global_pool;
  global_pool.reserve(kGlobalPoolSize);
  for (int i = 0; i < kGlobalPoolSize; ++i) global_pool.push_back(pool_name(i));

  std::vector<Triplet> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix(seed, 0x3000 + i));
    ProgramSpec spec = random_spec(rng, global_pool);
    const size_t la = rng.below(langs.size());
    size_t lb = rng.below(langs.size() - 1);
    if (lb >= la) ++lb;
    char id[16];
    std::snprintf(id, sizeof id, "t%06d", i);
    Triplet t;
    t.id = id;
    t.nl = nl_description(spec);
    t.code_a = {render_program(spec, langs[la]), langs[la]};
    t.code_b = {render_program(spec, langs[lb]), langs[lb]};
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

// All occurrences of a whole-word identifier replaced.
std::string rename_identifier(const std::string& text, const std::string& from,
                              const std::string& to) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, from.size(), from) == 0 && (i == 0 || !is_word(text[i - 1])) &&
        (i + from.size() == text.size() || !is_word(text[i + from.size()]))) {
      out += to;
      i += from.size();
    } else {
      out += text[i++];
    }
  }
  return out;
}

std::vector<std::string> identifiers_in(const std::string& text) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    if (tok.size() != 3) continue;
    if (!std::all_of(tok.begin(), tok.end(),
                     [](char c) { return c >= 'a' && c <= 'z'; }))
      continue;
    if (kKeywords.count(tok)) continue;
    if (seen.insert(tok).second) ids.push_back(tok);
  }
  return ids;
}

}  // namespace

PlantResult plant_near_duplicates(const std::vector<Snippet>& corpus, double rate, uint64_t seed) {
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("plant_near_duplicates: rate must be in [0,1]");
  PlantResult out;
  out.corpus = corpus;
  const int n_inject = static_cast<int>(rate * corpus.size());
  if (n_inject == 0) return out;

  Rng rng(mix(seed, 0x4000));
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  for (int c = 0; c < n_inject; ++c) {
    const Snippet& orig = corpus[order[c]];
    const auto orig_shingles = dedup::shingle(orig.text);
    auto ids = identifiers_in(orig.text);
    for (size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);

    auto fresh_name = [&]() {
      std::string name(3, 'a');
      do {
        for (auto& ch : name) ch = static_cast<char>('a' + rng.below(26));
      } while (kKeywords.count(name) || orig.text.find(name) != std::string::npos);
      return name;
    };

    // Rename identifiers one at a time while the copy stays comfortably
    // above the 0.7 near-duplicate threshold, leaving banded LSH with a
    // negligible miss probability. When every rename would cut too deep the
    // copy stays byte-identical, which is still a valid planted duplicate.
    std::string text = orig.text;
    for (const auto& ident : ids) {
      std::string candidate = rename_identifier(text, ident, fresh_name());
      const double j = dedup::exact_jaccard(orig_shingles, dedup::shingle(candidate));
      if (j < 0.84) break;
      text = candidate;
    }
    Snippet copy = orig;
    copy.id = orig.id + "_dup";
    copy.text = text;
    out.planted.emplace_back(orig.id, copy.id);
    out.corpus.push_back(std::move(copy));
  }
  return out;
}

}  // namespace mosekit::datagen
