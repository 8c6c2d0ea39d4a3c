#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosekit/config.hpp"
#include "mosekit/rng.hpp"

namespace mosekit::eval {

struct RankedList {
  std::string query_id;
  std::vector<std::string> candidates;  // descending similarity
  std::set<std::string> relevant;
};

// Exact cosine index over unit vectors; ties broken by ascending id.
struct Index {
  std::vector<std::string> ids;              // ascending
  std::vector<std::vector<double>> vectors;  // aligned with ids
  int dim = 0;
};

Index build_index(const std::map<std::string, std::vector<double>>& embeddings);
std::vector<std::string> search(const Index& index, const std::vector<double>& query, int k);

double mrr(const std::vector<RankedList>& lists);
double ndcg_binary(const std::vector<RankedList>& lists);
double map_multi(const std::vector<RankedList>& lists);
double recall_at_k(const std::vector<RankedList>& lists, int k);

struct ExitReport {
  int exit = 0;
  std::string task;
  std::map<std::string, double> metrics;
  double gflops = 0;
};

// Analytic forward cost in GFLOPs per exit (multiply-add = 2 ops), summed
// over layers up to each exit.
std::map<int, double> flops_per_exit(const EncoderConfig& cfg, int seq_len);

inline void to_json(nlohmann::json& j, const ExitReport& r) {
  j = {{"exit", r.exit}, {"task", r.task}, {"metrics", r.metrics}, {"gflops", r.gflops}};
}
inline void from_json(const nlohmann::json& j, ExitReport& r) {
  j.at("exit").get_to(r.exit);
  j.at("task").get_to(r.task);
  j.at("metrics").get_to(r.metrics);
  j.at("gflops").get_to(r.gflops);
}

struct PermutationResult {
  double p_value = 1.0;
  bool reject = false;
};

// Two-sample permutation test on |mean(a) - mean(b)|,
// p = (1 + #{permuted >= observed}) / (n_perm + 1).
PermutationResult permutation_test(const std::vector<double>& scores_a,
                                   const std::vector<double>& scores_b, int n_perm = 10000,
                                   double alpha = 0.05, uint64_t seed = 0);

// CSV columns: exit,task,gflops,mrr,ndcg,map,recall_at_1,recall_at_5
// (blank where a metric does not apply). Plot data: JSON array of
// {exit, gflops, metric, value}. Rows sorted by (exit, task).
void tradeoff_report(const std::vector<ExitReport>& reports, const std::string& csv_path,
                     const std::string& plot_path);
std::string tradeoff_csv(const std::vector<ExitReport>& reports);

}  // namespace mosekit::eval
