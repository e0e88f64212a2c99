#pragma once

// Ranking metrics over held-out final baskets, macro-averaged over test users.

#include "curatornet/baselines.hpp"
#include "curatornet/data.hpp"

#include <span>
#include <string>
#include <vector>

namespace curatornet {

/// Share of (relevant, non-relevant) pairs ordered correctly, ties counted
/// as one half. Throws std::invalid_argument when either side is empty.
double auc(std::span<const double> relevant_scores, std::span<const double> nonrelevant_scores);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// `ranked` is the full candidate ordering, best first.
PrecisionRecall precision_recall_at_k(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t k);
/// Binary-relevance nDCG with the ideal DCG truncated at min(k, |relevant|).
double ndcg_at_k(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t k);

inline const std::vector<std::size_t> kDefaultCutoffs = {20, 100};

struct UserMetrics {
  std::string user_id;
  std::size_t relevant = 0;
  std::size_t candidates = 0;
  double auc = 0.0;
  std::vector<double> precision;  // one per cutoff
  std::vector<double> recall;
  std::vector<double> ndcg;
};

struct EvalReport {
  std::string method;
  std::vector<std::size_t> cutoffs;
  std::vector<UserMetrics> users;
  std::size_t test_users = 0;
  std::size_t skipped_degenerate = 0;  // no relevant or no non-relevant candidate
  std::size_t unscorable = 0;          // the method cannot score the user
  double auc = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> ndcg;
};

inline constexpr std::string_view kCandidatePolicy =
    "candidates = all catalog items not purchased by the user in train; AUC over the full candidate set";

/// Candidates per test user are I \ I_u^+(train); relevant items are the
/// held-out basket. Candidates are ordered by descending score, ascending
/// item id on ties.
EvalReport evaluate(const Recommender& method, const Split& split, const Catalog& catalog,
                    const std::vector<std::size_t>& cutoffs = kDefaultCutoffs);

/// Table with one row per (label, report), columns AUC then R/P/nDCG per cutoff.
std::string format_results_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
/// `key value` lines, keys like `auc`, `precision@20`.
std::string format_report_kv(const EvalReport& report);
std::string format_per_user_tsv(const EvalReport& report);

struct PairedTTest {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Paired t-test on a[i] - b[i].
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace curatornet
