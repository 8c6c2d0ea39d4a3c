#include "mosekit/packing.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace mosekit::pack {

namespace {

// Lays out [PAD]... [SEP] s1 [SEP] s2 ... [CLS]. Each segment is truncated
// from its tail to fit, keeping at least one token per segment.
PackedExample layout(const std::vector<std::vector<int>>& segments, int max_len) {
  const int m = static_cast<int>(segments.size());
  if (2 * m + 1 > max_len) throw std::invalid_argument("layout: max_len too small");

  std::vector<int> content;
  std::vector<std::pair<int, int>> bounds;
  for (int i = 0; i < m; ++i) {
    const int reserve = (m - 1 - i) * 2 + 1;  // [SEP]+token per remaining segment, plus [CLS]
    const int avail = max_len - static_cast<int>(content.size()) - 1 - reserve;
    const int take = std::min<int>(static_cast<int>(segments[i].size()), avail);
    content.push_back(tok::kSep);
    bounds.emplace_back(static_cast<int>(content.size()), static_cast<int>(content.size()) + take);
    content.insert(content.end(), segments[i].begin(), segments[i].begin() + take);
  }
  content.push_back(tok::kCls);

  PackedExample ex;
  const int pad = max_len - static_cast<int>(content.size());
  ex.ids.assign(max_len, tok::kPad);
  ex.valid.assign(max_len, 0);
  std::copy(content.begin(), content.end(), ex.ids.begin() + pad);
  std::fill(ex.valid.begin() + pad, ex.valid.end(), 1);
  ex.cls_pos = max_len - 1;
  for (auto [s, e] : bounds) ex.seg_bounds.emplace_back(s + pad, e + pad);
  return ex;
}

}  // namespace

PackPool PackPool::build(const std::vector<Snippet>& corpus, const tok::Vocab& vocab) {
  PackPool pool;
  std::map<std::string, int> repo_index;
  for (const auto& s : corpus) {
    auto [it, inserted] = repo_index.emplace(s.repo_id, static_cast<int>(pool.repo_names.size()));
    if (inserted) {
      pool.repo_names.push_back(s.repo_id);
      pool.by_repo.emplace_back();
    }
    pool.by_repo[it->second].push_back(static_cast<int>(pool.tokens.size()));
    pool.repo_of.push_back(it->second);
    pool.tokens.push_back(tok::encode(vocab, s.text));
  }
  return pool;
}

PackedExample pack_icc(const PackPool& pool, int max_len, double p_cross, Rng& rng) {
  if (pool.tokens.empty()) throw std::invalid_argument("pack_icc: empty pool");
  if (max_len < 8) throw std::invalid_argument("pack_icc: max_len must be >= 8");
  const int n_repos = static_cast<int>(pool.by_repo.size());
  if (p_cross > 0.0 && n_repos < 2)
    throw std::invalid_argument("pack_icc: cross-repo packs need at least two repositories");

  const bool cross = rng.bernoulli(p_cross);
  const int base = static_cast<int>(rng.below(n_repos));
  const auto& repo = pool.by_repo[base];

  // Greedy fill from the base repo until max_len would be exceeded, two
  // segments minimum.
  std::vector<int> chosen;
  int used = 1;  // [CLS]
  {
    const int first = repo[rng.below(repo.size())];
    const int len = std::min<int>(static_cast<int>(pool.tokens[first].size()), max_len - 3);
    chosen.push_back(first);
    used += 1 + len;
  }
  while (true) {
    const int cand = repo[rng.below(repo.size())];
    const int len = static_cast<int>(pool.tokens[cand].size());
    if (used + 1 + len <= max_len) {
      chosen.push_back(cand);
      used += 1 + len;
      if (used >= max_len - 2) break;
    } else if (chosen.size() < 2) {
      chosen.push_back(cand);  // truncated by layout
      break;
    } else {
      break;
    }
  }

  if (cross) {
    // Exactly one segment is replaced by a snippet from a different repository.
    int other_repo = static_cast<int>(rng.below(n_repos - 1));
    if (other_repo >= base) ++other_repo;
    const auto& other = pool.by_repo[other_repo];
    chosen[rng.below(chosen.size())] = other[rng.below(other.size())];
  }

  std::vector<std::vector<int>> segments;
  for (int idx : chosen) segments.push_back(pool.tokens[idx]);
  PackedExample ex = layout(segments, max_len);
  ex.icc_label = cross ? IccLabel::cross_repo : IccLabel::same_repo;
  return ex;
}

void apply_mlm_mask(PackedExample& ex, double rate, Rng& rng, int vocab_size) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("apply_mlm_mask: bad rate");
  ex.mlm_targets.clear();
  const int n_normal = vocab_size - tok::kNumSpecials;
  for (size_t p = 0; p < ex.ids.size(); ++p) {
    if (!ex.valid[p] || ex.ids[p] < tok::kNumSpecials) continue;
    if (!rng.bernoulli(rate)) continue;
    ex.mlm_targets.emplace_back(static_cast<int>(p), ex.ids[p]);
    const double r = rng.uniform();
    if (r < 0.8) {
      ex.ids[p] = tok::kMask;
    } else if (r < 0.9 && n_normal > 0) {
      ex.ids[p] = tok::kNumSpecials + static_cast<int>(rng.below(n_normal));
    }  // else kept unchanged
  }
}

PackedExample pack_pair(const std::vector<int>& a, const std::vector<int>& b, int max_len) {
  if (max_len < 8) throw std::invalid_argument("pack_pair: max_len must be >= 8");
  int la = static_cast<int>(a.size()), lb = static_cast<int>(b.size());
  const int budget = max_len - 3;
  bool drop_a = true;
  while (la + lb > budget) {
    if (drop_a && la > 1) --la;
    else if (!drop_a && lb > 1) --lb;
    else if (la > 1) --la;
    else --lb;
    drop_a = !drop_a;
  }
  std::vector<std::vector<int>> segments = {{a.begin(), a.begin() + la},
                                            {b.begin(), b.begin() + lb}};
  return layout(segments, max_len);
}

PackedExample pack_single(const std::vector<int>& text, int max_len) {
  if (max_len < 4) throw std::invalid_argument("pack_single: max_len must be >= 4");
  const int take = std::min<int>(static_cast<int>(text.size()), max_len - 2);
  std::vector<std::vector<int>> segments = {{text.begin(), text.begin() + take}};
  return layout(segments, max_len);
}

PackedExample pack_nsp(const PackPool& pool, int max_len, double p_random, Rng& rng) {
  if (pool.tokens.empty()) throw std::invalid_argument("pack_nsp: empty pool");
  // First segment must have a successor within its repository.
  std::vector<int> anchors;
  for (const auto& repo : pool.by_repo)
    for (size_t i = 0; i + 1 < repo.size(); ++i) anchors.push_back(repo[i]);
  if (anchors.empty()) throw std::invalid_argument("pack_nsp: no adjacent snippet pairs");

  const int first = anchors[rng.below(anchors.size())];
  const bool random_pair = rng.bernoulli(p_random);
  int second;
  if (random_pair) {
    second = static_cast<int>(rng.below(pool.tokens.size()));
  } else {
    const auto& repo = pool.by_repo[pool.repo_of[first]];
    second = *(std::find(repo.begin(), repo.end(), first) + 1);
  }
  PackedExample ex = pack_pair(pool.tokens[first], pool.tokens[second], max_len);
  ex.nsp_label = random_pair ? 0 : 1;
  return ex;
}

}  // namespace mosekit::pack
