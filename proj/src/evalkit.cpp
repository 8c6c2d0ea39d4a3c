#include "mosekit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mosekit::eval {

Index build_index(const std::map<std::string, std::vector<double>>& embeddings) {
  Index idx;
  for (const auto& [id, v] : embeddings) {  // std::map iterates ids in ascending order
    if (idx.dim == 0) idx.dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != idx.dim)
      throw std::invalid_argument("build_index: inconsistent dimensions");
    double sq = 0;
    for (double x : v) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
      throw std::invalid_argument("build_index: vector for " + id + " is not unit-norm");
    idx.ids.push_back(id);
    idx.vectors.push_back(v);
  }
  return idx;
}

std::vector<std::string> search(const Index& index, const std::vector<double>& query, int k) {
  if (static_cast<int>(query.size()) != index.dim)
    throw std::invalid_argument("search: query dimension mismatch");
  const int n = static_cast<int>(index.ids.size());
  std::vector<std::pair<double, int>> scored(n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int d = 0; d < index.dim; ++d) s += index.vectors[i][d] * query[d];
    scored[i] = {s, i};
  }
  // descending score; equal scores fall back to ascending id (ids are sorted)
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const int take = std::min(k, n);
  std::vector<std::string> out;
  out.reserve(take);
  for (int i = 0; i < take; ++i) out.push_back(index.ids[scored[i].second]);
  return out;
}

namespace {

int first_relevant_rank(const RankedList& l) {
  for (size_t i = 0; i < l.candidates.size(); ++i)
    if (l.relevant.count(l.candidates[i])) return static_cast<int>(i) + 1;
  return 0;
}

void check_lists(const std::vector<RankedList>& lists) {
  if (lists.empty()) throw std::invalid_argument("metric: no ranked lists");
  for (const auto& l : lists)
    if (l.relevant.empty()) throw std::invalid_argument("metric: list without relevant items");
}

}  // namespace

double mrr(const std::vector<RankedList>& lists) {
  check_lists(lists);
  double total = 0;
  for (const auto& l : lists) {
    const int r = first_relevant_rank(l);
    if (r == 0) continue;  // relevant item missing from candidates scores 0
    total += 1.0 / r;
  }
  return total / static_cast<double>(lists.size());
}

double ndcg_binary(const std::vector<RankedList>& lists) {
  check_lists(lists);
  double total = 0;
  for (const auto& l : lists) {
    const int r = first_relevant_rank(l);
    if (r == 0) continue;
    total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(lists.size());
}

double map_multi(const std::vector<RankedList>& lists) {
  check_lists(lists);
  double total = 0;
  for (const auto& l : lists) {
    int hits = 0;
    double ap = 0;
    for (size_t i = 0; i < l.candidates.size(); ++i)
      if (l.relevant.count(l.candidates[i])) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    total += ap / static_cast<double>(l.relevant.size());
  }
  return total / static_cast<double>(lists.size());
}

double recall_at_k(const std::vector<RankedList>& lists, int k) {
  check_lists(lists);
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  double total = 0;
  for (const auto& l : lists) {
    int found = 0;
    const int top = std::min<int>(k, static_cast<int>(l.candidates.size()));
    for (int i = 0; i < top; ++i)
      if (l.relevant.count(l.candidates[i])) ++found;
    total += static_cast<double>(found) / static_cast<double>(l.relevant.size());
  }
  return total / static_cast<double>(lists.size());
}

std::map<int, double> flops_per_exit(const EncoderConfig& cfg, int seq_len) {
  cfg.validate();
  const double S = seq_len, H = cfg.hidden, I = cfg.intermediate;
  const double Hkv = static_cast<double>(cfg.n_kv_heads) * cfg.head_dim();
  // multiply-add counted as 2 ops
  const double qkv = 2.0 * S * H * H + 2.0 * 2.0 * S * H * Hkv;
  const double logits = 2.0 * S * S * H;  // all query heads together
  const double weighted = 2.0 * S * S * H;
  const double out_proj = 2.0 * S * H * H;
  const double mlp = 2.0 * S * H * I * 2.0;
  // head-independent terms: two layer norms, rotary rotations, activation
  const double misc = 2.0 * 8.0 * S * H + 6.0 * S * H + 8.0 * S * I;
  const double per_layer = qkv + logits + weighted + out_proj + mlp + misc;

  std::map<int, double> out;
  for (int e : cfg.exit_set) out[e] = per_layer * e / 1e9;
  return out;
}

PermutationResult permutation_test(const std::vector<double>& scores_a,
                                   const std::vector<double>& scores_b, int n_perm, double alpha,
                                   uint64_t seed) {
  if (scores_a.empty() || scores_b.empty())
    throw std::invalid_argument("permutation_test: empty sample");
  auto mean = [](const double* d, size_t n) {
    return std::accumulate(d, d + n, 0.0) / static_cast<double>(n);
  };
  const double observed =
      std::abs(mean(scores_a.data(), scores_a.size()) - mean(scores_b.data(), scores_b.size()));

  // The pool is sorted and the smaller group drawn first, so the result is
  // exactly invariant to exchanging (a, b).
  std::vector<double> pool = scores_a;
  pool.insert(pool.end(), scores_b.begin(), scores_b.end());
  std::sort(pool.begin(), pool.end());
  const size_t n1 = std::min(scores_a.size(), scores_b.size());
  const size_t n = pool.size();

  Rng rng(seed);
  int count = 0;
  std::vector<double> shuffled = pool;
  for (int t = 0; t < n_perm; ++t) {
    for (size_t i = n - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    const double stat =
        std::abs(mean(shuffled.data(), n1) - mean(shuffled.data() + n1, n - n1));
    if (stat >= observed) ++count;
  }
  PermutationResult r;
  r.p_value = (1.0 + count) / (n_perm + 1.0);
  r.reject = r.p_value <= alpha;
  return r;
}

namespace {

std::string cell(const std::map<std::string, double>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) return "";
  std::ostringstream os;
  os.precision(10);
  os << it->second;
  return os.str();
}

}  // namespace

std::string tradeoff_csv(const std::vector<ExitReport>& reports) {
  std::vector<ExitReport> rows = reports;
  std::stable_sort(rows.begin(), rows.end(), [](const ExitReport& a, const ExitReport& b) {
    return a.exit != b.exit ? a.exit < b.exit : a.task < b.task;
  });
  std::ostringstream os;
  os << "exit,task,gflops,mrr,ndcg,map,recall_at_1,recall_at_5\n";
  for (const auto& r : rows) {
    std::ostringstream g;
    g.precision(10);
    g << r.gflops;
    os << r.exit << ',' << r.task << ',' << g.str() << ',' << cell(r.metrics, "mrr") << ','
       << cell(r.metrics, "ndcg") << ',' << cell(r.metrics, "map") << ','
       << cell(r.metrics, "recall_at_1") << ',' << cell(r.metrics, "recall_at_5") << '\n';
  }
  return os.str();
}

void tradeoff_report(const std::vector<ExitReport>& reports, const std::string& csv_path,
                     const std::string& plot_path) {
  {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw std::runtime_error("tradeoff_report: cannot open " + csv_path);
    f << tradeoff_csv(reports);
  }
  nlohmann::json plot = nlohmann::json::array();
  std::vector<ExitReport> rows = reports;
  std::stable_sort(rows.begin(), rows.end(), [](const ExitReport& a, const ExitReport& b) {
    return a.exit != b.exit ? a.exit < b.exit : a.task < b.task;
  });
  for (const auto& r : rows)
    for (const auto& [name, value] : r.metrics)
      plot.push_back({{"exit", r.exit}, {"gflops", r.gflops}, {"metric", name}, {"value", value}});
  std::ofstream f(plot_path, std::ios::trunc);
  if (!f) throw std::runtime_error("tradeoff_report: cannot open " + plot_path);
  f << plot.dump(2) << '\n';
}

}  // namespace mosekit::eval
