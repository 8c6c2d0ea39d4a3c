#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mosekit/types.hpp"

namespace mosekit::datagen {

// Seed-derived abstract program, rendered into equivalent snippets in the
// toy languages. Rendering is byte-deterministic.
struct ProgramSpec {
  std::vector<std::string> vars;  // distinct identifiers, first is the result
  std::vector<int> lits;          // one literal per var
  int loop_n = 2;
  int op_kind = 0;  // 0 add, 1 sub, 2 mul
};

inline const std::vector<std::string> kToyLangs = {"toyA", "toyB", "toyC"};

// Size of the real fine-tuning triplet dataset; documentation metadata only.
inline constexpr long long kReferenceTripletCount = 1'071'367;

std::string render_program(const ProgramSpec& spec, const std::string& lang);
std::string nl_description(const ProgramSpec& spec);

std::vector<Snippet> gen_corpus(uint64_t seed, int n_repos, int snippets_per_repo,
                                const std::vector<std::string>& langs);

std::vector<Triplet> gen_triplets(uint64_t seed, int n, const std::vector<std::string>& langs);

struct PlantResult {
  std::vector<Snippet> corpus;  // originals followed by injected copies
  DuplicateMap planted;         // (original_id, copy_id)
};

// Injects near-copies differing from their originals only by identifier
// renaming; every planted pair keeps exact char-5-gram Jaccard >= 0.7.
PlantResult plant_near_duplicates(const std::vector<Snippet>& corpus, double rate, uint64_t seed);

}  // namespace mosekit::datagen
