#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mosekit/evalkit.hpp"
#include "mosekit/model.hpp"
#include "mosekit/packing.hpp"
#include "mosekit/tokenizer.hpp"
#include "mosekit/training.hpp"
#include "mosekit/types.hpp"

namespace mosekit::pipe {

// Unit-norm projected embeddings for each requested exit, one vector per text.
template <typename T>
std::map<int, std::vector<std::vector<double>>> embed_texts(
    const model::ParamSet<T>& p, const tok::Vocab& vocab, const std::vector<std::string>& texts,
    const std::vector<int>& exits, int max_len, int batch_size = 8) {
  if (exits.empty()) throw std::invalid_argument("embed_texts: no exits requested");
  const int top = *std::max_element(exits.begin(), exits.end());
  std::map<int, std::vector<std::vector<double>>> out;
  for (int e : exits) out[e].reserve(texts.size());

  for (size_t start = 0; start < texts.size(); start += batch_size) {
    const size_t end = std::min(texts.size(), start + batch_size);
    std::vector<pack::PackedExample> exs;
    for (size_t i = start; i < end; ++i)
      exs.push_back(pack::pack_single(tok::encode(vocab, texts[i]), max_len));
    const auto states = model::forward(p, model::Batch::from_examples(exs), top);
    for (int e : exits) {
      const model::Mat<T> emb = model::project(p, states.pooled.at(e), e);
      for (long r = 0; r < emb.rows(); ++r) {
        std::vector<double> v(emb.cols());
        for (long c = 0; c < emb.cols(); ++c) v[c] = static_cast<double>(emb(r, c));
        out[e].push_back(std::move(v));
      }
    }
  }
  return out;
}

struct QuerySpec {
  std::string id;
  std::string text;       // already carries its instruction prefix
  std::string target_id;  // key into the pool
};

// Per exit: embed the pool and the queries, rank each query's target among
// n_distractors seeded uniform draws, and aggregate the ranking metrics.
template <typename T>
std::vector<eval::ExitReport> retrieval_eval(const model::ParamSet<T>& p, const tok::Vocab& vocab,
                                             const std::vector<QuerySpec>& queries,
                                             const std::map<std::string, std::string>& pool,
                                             const std::vector<int>& exits, int n_distractors,
                                             uint64_t seed, const std::string& task, int max_len) {
  if (queries.empty()) throw std::invalid_argument("retrieval_eval: no queries");
  if (static_cast<int>(pool.size()) < n_distractors + 1)
    throw std::invalid_argument("retrieval_eval: pool too small for requested distractor count");
  for (const auto& q : queries)
    if (!pool.count(q.target_id))
      throw std::invalid_argument("retrieval_eval: target " + q.target_id + " missing from pool");

  std::vector<std::string> pool_ids, pool_texts, query_texts;
  for (const auto& [id, text] : pool) {
    pool_ids.push_back(id);
    pool_texts.push_back(text);
  }
  for (const auto& q : queries) query_texts.push_back(q.text);

  const auto pool_emb = embed_texts(p, vocab, pool_texts, exits, max_len);
  const auto query_emb = embed_texts(p, vocab, query_texts, exits, max_len);

  // One distractor draw per query, shared across exits so that exits are
  // compared on identical candidate sets.
  Rng rng(seed);
  std::vector<std::vector<int>> candidate_sets;
  std::map<std::string, int> pool_pos;
  for (size_t i = 0; i < pool_ids.size(); ++i) pool_pos[pool_ids[i]] = static_cast<int>(i);
  for (const auto& q : queries) {
    const int target = pool_pos.at(q.target_id);
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < n_distractors) {
      const int c = static_cast<int>(rng.below(pool_ids.size()));
      if (c != target) chosen.insert(c);
    }
    std::vector<int> cand(chosen.begin(), chosen.end());
    cand.push_back(target);
    candidate_sets.push_back(std::move(cand));
  }

  const auto gflops = eval::flops_per_exit(p.cfg, max_len);
  std::vector<eval::ExitReport> reports;
  for (int e : exits) {
    std::vector<eval::RankedList> lists;
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      std::map<std::string, std::vector<double>> sub;
      for (int ci : candidate_sets[qi]) sub[pool_ids[ci]] = pool_emb.at(e)[ci];
      const auto index = eval::build_index(sub);
      eval::RankedList l;
      l.query_id = queries[qi].id;
      l.candidates = eval::search(index, query_emb.at(e)[qi], static_cast<int>(sub.size()));
      l.relevant = {queries[qi].target_id};
      lists.push_back(std::move(l));
    }
    eval::ExitReport r;
    r.exit = e;
    r.task = task;
    r.gflops = gflops.at(e);
    r.metrics["mrr"] = eval::mrr(lists);
    r.metrics["ndcg"] = eval::ndcg_binary(lists);
    r.metrics["map"] = eval::map_multi(lists);
    r.metrics["recall_at_1"] = eval::recall_at_k(lists, 1);
    r.metrics["recall_at_5"] = eval::recall_at_k(lists, 5);
    reports.push_back(std::move(r));
  }
  return reports;
}

inline std::vector<QuerySpec> t2c_queries(const std::vector<Triplet>& triplets) {
  std::vector<QuerySpec> qs;
  for (const auto& t : triplets) qs.push_back({t.id, train::kT2cPrefix + t.nl, t.id});
  return qs;
}
inline std::vector<QuerySpec> c2c_queries(const std::vector<Triplet>& triplets) {
  std::vector<QuerySpec> qs;
  for (const auto& t : triplets)
    qs.push_back({t.id, train::kC2cPrefix + t.code_b.text, t.id});
  return qs;
}
inline std::map<std::string, std::string> code_pool(const std::vector<Triplet>& triplets) {
  std::map<std::string, std::string> pool;
  for (const auto& t : triplets) pool[t.id] = t.code_a.text;
  return pool;
}

// Per-exit precision/recall/F1 at a probability threshold. Degenerate cases
// (no predicted positives, or no true positives) score 0 and add a warning.
template <typename T>
std::vector<eval::ExitReport> clone_eval(const model::ParamSet<T>& p, const tok::Vocab& vocab,
                                         const std::vector<train::ClonePair>& pairs,
                                         const std::vector<int>& exits, double threshold,
                                         int max_len, std::vector<std::string>* warnings = nullptr) {
  if (pairs.empty()) throw std::invalid_argument("clone_eval: no pairs");
  bool has_pos = false, has_neg = false;
  for (const auto& pr : pairs) {
    if (pr.label == 1) has_pos = true;
    else if (pr.label == 0) has_neg = true;
    else throw std::invalid_argument("clone_eval: pair without a 0/1 label");
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("clone_eval: need at least one positive and one negative pair");

  const int top = *std::max_element(exits.begin(), exits.end());
  std::map<int, std::vector<int>> preds;
  constexpr int kChunk = 8;
  for (size_t start = 0; start < pairs.size(); start += kChunk) {
    const size_t end = std::min(pairs.size(), start + kChunk);
    std::vector<pack::PackedExample> exs;
    for (size_t i = start; i < end; ++i)
      exs.push_back(pack::pack_pair(tok::encode(vocab, pairs[i].text_a),
                                    tok::encode(vocab, pairs[i].text_b), max_len));
    const auto states = model::forward(p, model::Batch::from_examples(exs), top);
    for (int e : exits) {
      const model::Vec<T> z = model::clone_logit(p, states.pooled.at(e), e);
      for (long r = 0; r < z.size(); ++r) {
        const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(z(r))));
        preds[e].push_back(prob >= threshold ? 1 : 0);
      }
    }
  }

  const auto gflops = eval::flops_per_exit(p.cfg, max_len);
  std::vector<eval::ExitReport> reports;
  for (int e : exits) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const int y = pairs[i].label, yp = preds[e][i];
      if (yp == 1 && y == 1) ++tp;
      else if (yp == 1 && y == 0) ++fp;
      else if (yp == 0 && y == 1) ++fn;
    }
    auto safe_div = [&](int num, int den, const std::string& what) {
      if (den > 0) return static_cast<double>(num) / den;
      if (warnings)
        warnings->push_back("exit " + std::to_string(e) + ": " + what +
                            " undefined (no support), reported as 0");
      return 0.0;
    };
    const double prec = safe_div(tp, tp + fp, "precision");
    const double rec = safe_div(tp, tp + fn, "recall");
    const double f1 = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    eval::ExitReport r;
    r.exit = e;
    r.task = "clone";
    r.gflops = gflops.at(e);
    r.metrics["precision"] = prec;
    r.metrics["recall"] = rec;
    r.metrics["f1"] = f1;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace mosekit::pipe
