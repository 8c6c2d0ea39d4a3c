#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mosekit/rng.hpp"
#include "mosekit/tokenizer.hpp"
#include "mosekit/types.hpp"

namespace mosekit::pack {

enum class IccLabel { none, same_repo, cross_repo };

// One fixed-length model input: left padding, [SEP]-separated segments,
// trailing [CLS].
struct PackedExample {
  std::vector<int> ids;                          // length max_len
  std::vector<uint8_t> valid;                    // false on the left-pad prefix
  std::vector<std::pair<int, int>> mlm_targets;  // (position, original id)
  IccLabel icc_label = IccLabel::none;
  int nsp_label = -1;  // 1 next, 0 random, -1 n/a
  int cls_pos = -1;
  std::vector<std::pair<int, int>> seg_bounds;  // [start, end) per segment
};

// Tokenized corpus indexed by repository, generation order preserved.
struct PackPool {
  std::vector<std::vector<int>> tokens;
  std::vector<int> repo_of;
  std::vector<std::string> repo_names;
  std::vector<std::vector<int>> by_repo;  // repo -> snippet indices in order

  static PackPool build(const std::vector<Snippet>& corpus, const tok::Vocab& vocab);
};

// Concatenates two or more snippets up to max_len; with probability p_cross
// one segment comes from a different repository (label cross_repo).
PackedExample pack_icc(const PackPool& pool, int max_len, double p_cross, Rng& rng);

// 15%-style masking with the 80-10-10 replacement split.
void apply_mlm_mask(PackedExample& ex, double rate, Rng& rng, int vocab_size);

// [PAD]... [SEP] a [SEP] b [CLS]; alternating tail truncation when over budget.
PackedExample pack_pair(const std::vector<int>& a, const std::vector<int>& b, int max_len);

// Single segment: [PAD]... [SEP] text [CLS].
PackedExample pack_single(const std::vector<int>& text, int max_len);

// NSP comparator: "next" means the following snippet of the same repository
// in generation order, otherwise a random snippet.
PackedExample pack_nsp(const PackPool& pool, int max_len, double p_random, Rng& rng);

}  // namespace mosekit::pack
