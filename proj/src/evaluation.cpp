#include "curatornet/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_set>

namespace curatornet {

double auc(std::span<const double> relevant_scores, std::span<const double> nonrelevant_scores) {
  if (relevant_scores.empty() || nonrelevant_scores.empty())
    throw std::invalid_argument("auc: need at least one relevant and one non-relevant candidate");
  std::vector<double> neg(nonrelevant_scores.begin(), nonrelevant_scores.end());
  for (double s : neg)
    if (std::isnan(s)) throw NumericError("auc: NaN score");
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double r : relevant_scores) {
    if (std::isnan(r)) throw NumericError("auc: NaN score");
    const auto lo = std::lower_bound(neg.begin(), neg.end(), r);
    const auto hi = std::upper_bound(lo, neg.end(), r);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(relevant_scores.size()) * static_cast<double>(neg.size()));
}

namespace {

std::size_t hits_in_top(std::span<const ItemIndex> ranked, const std::unordered_set<ItemIndex>& rel, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p)
    if (rel.contains(ranked[p])) ++hits;
  return hits;
}

}  // namespace

PrecisionRecall precision_recall_at_k(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t k) {
  if (k == 0) throw std::invalid_argument("precision_recall_at_k: k must be >= 1");
  const std::unordered_set<ItemIndex> rel(relevant.begin(), relevant.end());
  if (rel.empty()) throw std::invalid_argument("precision_recall_at_k: empty relevant set");
  const auto hits = static_cast<double>(hits_in_top(ranked, rel, k));
  return {hits / static_cast<double>(k), hits / static_cast<double>(rel.size())};
}

double ndcg_at_k(std::span<const ItemIndex> ranked, std::span<const ItemIndex> relevant, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  const std::unordered_set<ItemIndex> rel(relevant.begin(), relevant.end());
  if (rel.empty()) throw std::invalid_argument("ndcg_at_k: empty relevant set");
  double dcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p)
    if (rel.contains(ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, rel.size()); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

EvalReport evaluate(const Recommender& method, const Split& split, const Catalog& catalog,
                    const std::vector<std::size_t>& cutoffs) {
  if (cutoffs.empty()) throw std::invalid_argument("evaluate: no cutoffs");
  for (std::size_t k : cutoffs)
    if (k == 0) throw std::invalid_argument("evaluate: cutoffs must be >= 1");
  const std::size_t max_k = *std::max_element(cutoffs.begin(), cutoffs.end());

  // Rank of every item id in lexicographic order, for tie-breaking.
  std::vector<ItemIndex> by_id(catalog.size());
  std::iota(by_id.begin(), by_id.end(), ItemIndex{0});
  std::sort(by_id.begin(), by_id.end(), [&](ItemIndex a, ItemIndex b) { return catalog.id(a) < catalog.id(b); });
  std::vector<std::uint32_t> id_rank(catalog.size());
  for (std::size_t r = 0; r < by_id.size(); ++r) id_rank[by_id[r]] = static_cast<std::uint32_t>(r);

  enum class Outcome { kScored, kDegenerate, kUnscorable };
  std::vector<Outcome> outcome(split.test.size(), Outcome::kScored);
  std::vector<UserMetrics> rows(split.test.size());

  parallel_for(split.test.size(), [&](std::size_t t) {
    const TestBasket& tb = split.test[t];
    const UserHistory& user = split.train.user(tb.train_user);
    std::vector<char> owned(catalog.size(), 0);
    for (ItemIndex i : user.positives) owned[i] = 1;
    std::vector<ItemIndex> relevant;
    for (ItemIndex i : tb.items)
      if (!owned[i]) relevant.push_back(i);
    const std::size_t candidates = catalog.size() - user.positives.size();
    if (relevant.empty() || relevant.size() == candidates) {
      outcome[t] = Outcome::kDegenerate;
      return;
    }
    const UserQuery query{tb.train_user, user.user_id, user.positives, relevant};
    if (!method.can_score(query)) {
      outcome[t] = Outcome::kUnscorable;
      return;
    }
    const VectorD scores = method.score_all(query);
    if (static_cast<std::size_t>(scores.size()) != catalog.size())
      throw ShapeError(method.name() + ": score vector does not cover the catalog");
    require_finite(scores, method.name() + " scores");

    std::vector<char> is_rel(catalog.size(), 0);
    for (ItemIndex i : relevant) is_rel[i] = 1;
    std::vector<double> rel_scores, non_scores;
    std::vector<ItemIndex> order;
    order.reserve(candidates);
    for (ItemIndex i = 0; i < catalog.size(); ++i) {
      if (owned[i]) continue;
      order.push_back(i);
      (is_rel[i] ? rel_scores : non_scores).push_back(scores(i));
    }
    const std::size_t keep = std::min(max_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](ItemIndex a, ItemIndex b) {
                        if (scores(a) != scores(b)) return scores(a) > scores(b);
                        return id_rank[a] < id_rank[b];
                      });
    order.resize(keep);

    UserMetrics& m = rows[t];
    m.user_id = user.user_id;
    m.relevant = relevant.size();
    m.candidates = candidates;
    m.auc = auc(rel_scores, non_scores);
    for (std::size_t k : cutoffs) {
      const auto pr = precision_recall_at_k(order, relevant, k);
      m.precision.push_back(pr.precision);
      m.recall.push_back(pr.recall);
      m.ndcg.push_back(ndcg_at_k(order, relevant, k));
    }
  });

  EvalReport report;
  report.method = method.name();
  report.cutoffs = cutoffs;
  report.test_users = split.test.size();
  report.precision.assign(cutoffs.size(), 0.0);
  report.recall.assign(cutoffs.size(), 0.0);
  report.ndcg.assign(cutoffs.size(), 0.0);
  for (std::size_t t = 0; t < split.test.size(); ++t) {
    if (outcome[t] == Outcome::kDegenerate) {
      ++report.skipped_degenerate;
      spdlog::warn("{}: user {} skipped (degenerate candidate set)", method.name(), split.test[t].user_id);
      continue;
    }
    if (outcome[t] == Outcome::kUnscorable) {
      ++report.unscorable;
      continue;
    }
    report.users.push_back(std::move(rows[t]));
  }
  if (report.unscorable > 0)
    spdlog::warn("{}: {} test users could not be scored and were excluded", method.name(), report.unscorable);
  if (!report.users.empty()) {
    const double n = static_cast<double>(report.users.size());
    for (const auto& u : report.users) {
      report.auc += u.auc;
      for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        report.precision[c] += u.precision[c];
        report.recall[c] += u.recall[c];
        report.ndcg[c] += u.ndcg[c];
      }
    }
    report.auc /= n;
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      report.precision[c] /= n;
      report.recall[c] /= n;
      report.ndcg[c] /= n;
    }
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

std::string exact(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

std::string format_results_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) return {};
  const auto& cutoffs = rows.front().second.cutoffs;
  std::vector<std::string> header = {"Method", "AUC"};
  for (std::size_t k : cutoffs) {
    header.push_back("R@" + std::to_string(k));
    header.push_back("P@" + std::to_string(k));
    header.push_back("nDCG@" + std::to_string(k));
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& [label, r] : rows) {
    if (r.cutoffs != cutoffs) throw std::invalid_argument("format_results_table: reports use different cutoffs");
    std::vector<std::string> line = {label, fixed4(r.auc)};
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      line.push_back(fixed4(r.recall[c]));
      line.push_back(fixed4(r.precision[c]));
      line.push_back(fixed4(r.ndcg[c]));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  out << "# " << kCandidatePolicy << "\n";
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0)
        out << std::left << std::setw(static_cast<int>(width[c])) << line[c];
      else
        out << "  " << std::right << std::setw(static_cast<int>(width[c])) << line[c];
    }
    out << "\n";
  };
  emit(header);
  for (const auto& line : cells) emit(line);
  return out.str();
}

std::string format_report_kv(const EvalReport& report) {
  std::ostringstream out;
  out << "# " << kCandidatePolicy << "\n";
  out << "method " << report.method << "\n";
  out << "test_users " << report.test_users << "\n";
  out << "evaluated_users " << report.users.size() << "\n";
  out << "skipped_degenerate " << report.skipped_degenerate << "\n";
  out << "unscorable " << report.unscorable << "\n";
  out << "auc " << exact(report.auc) << "\n";
  for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
    const auto k = std::to_string(report.cutoffs[c]);
    out << "recall@" << k << " " << exact(report.recall[c]) << "\n";
    out << "precision@" << k << " " << exact(report.precision[c]) << "\n";
    out << "ndcg@" << k << " " << exact(report.ndcg[c]) << "\n";
  }
  return out.str();
}

std::string format_per_user_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "user_id\trelevant\tcandidates\tauc";
  for (std::size_t k : report.cutoffs) out << "\trecall@" << k << "\tprecision@" << k << "\tndcg@" << k;
  out << "\n";
  for (const auto& u : report.users) {
    out << u.user_id << "\t" << u.relevant << "\t" << u.candidates << "\t" << exact(u.auc);
    for (std::size_t c = 0; c < report.cutoffs.size(); ++c)
      out << "\t" << exact(u.recall[c]) << "\t" << exact(u.precision[c]) << "\t" << exact(u.ndcg[c]);
    out << "\n";
  }
  return out.str();
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: samples differ in length");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  PairedTTest out;
  out.n = a.size();
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  out.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - out.mean_difference) * (x - out.mean_difference);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    out.t_statistic = out.mean_difference == 0.0 ? 0.0
                                                 : std::copysign(std::numeric_limits<double>::infinity(), out.mean_difference);
    out.p_value = out.mean_difference == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t_statistic = out.mean_difference / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic)));
  return out;
}

}  // namespace curatornet
