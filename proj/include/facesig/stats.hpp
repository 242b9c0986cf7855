#pragma once

// Friedman test with the Iman-Davenport correction and the two-tailed
// Bonferroni-Dunn critical difference, for comparing k methods over N
// datasets (here: evaluation splits).
//
// Critical values are inputs. A lookup covers only F(1, 29; 0.10) and the
// two-method Bonferroni-Dunn q at alpha 0.10.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "facesig/error.hpp"

namespace facesig {

struct RankMatrix {
  std::vector<std::vector<double>> ranks;  // ranks[dataset][method], 1 = best

  std::size_t datasets() const { return ranks.size(); }
  std::size_t methods() const { return ranks.empty() ? 0 : ranks.front().size(); }

  std::vector<double> average_ranks() const {
    std::vector<double> r(methods(), 0.0);
    for (const auto& row : ranks)
      for (std::size_t j = 0; j < row.size(); ++j) r[j] += row[j];
    for (auto& x : r) x /= static_cast<double>(datasets());
    return r;
  }
};

/// Ranks methods within each dataset row: highest accuracy gets rank 1 and
/// tied values share the mean of the positions they span.
inline RankMatrix rank_rows(const std::vector<std::vector<double>>& accuracy) {
  if (accuracy.empty()) throw Error(ErrorCode::empty_input, "rank_rows: no datasets");
  const std::size_t k = accuracy.front().size();
  if (k == 0) throw Error(ErrorCode::empty_input, "rank_rows: no methods");
  RankMatrix out;
  for (const auto& row : accuracy) {
    if (row.size() != k) throw Error(ErrorCode::dimension_mismatch, "rank_rows: ragged matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "rank_rows: non-finite entry");
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::vector<double> ranks(k);
    for (std::size_t i = 0; i < k;) {
      std::size_t j = i;
      while (j + 1 < k && row[order[j + 1]] == row[order[i]]) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
      i = j + 1;
    }
    out.ranks.push_back(std::move(ranks));
  }
  return out;
}

/// chi2_F = 12N / (k(k+1)) * (sum_j R_j^2 - k(k+1)^2 / 4), k = R.size().
inline double friedman_chi2(std::span<const double> average_ranks, std::size_t n_datasets) {
  const std::size_t k = average_ranks.size();
  if (k < 2) throw Error(ErrorCode::invalid_argument, "friedman_chi2: need k >= 2 methods");
  if (n_datasets < 1) throw Error(ErrorCode::invalid_argument, "friedman_chi2: need N >= 1");
  const double kd = static_cast<double>(k), nd = static_cast<double>(n_datasets);
  double sum_sq = 0.0;
  for (double r : average_ranks) sum_sq += r * r;
  return 12.0 * nd / (kd * (kd + 1.0)) * (sum_sq - kd * (kd + 1.0) * (kd + 1.0) / 4.0);
}

/// F_F = (N-1) chi2 / (N(k-1) - chi2), F-distributed with (k-1, (k-1)(N-1)) dof.
inline double iman_davenport(double chi2, std::size_t n_datasets, std::size_t k) {
  if (!(chi2 >= 0.0)) throw Error(ErrorCode::invalid_argument, "iman_davenport: chi2 < 0");
  if (k < 2 || n_datasets < 1) throw Error(ErrorCode::invalid_argument, "iman_davenport: bad N or k");
  const double nd = static_cast<double>(n_datasets), kd = static_cast<double>(k);
  const double denom = nd * (kd - 1.0) - chi2;
  if (!(denom > 0.0))
    throw Error(ErrorCode::degenerate_statistic,
                "iman_davenport: N(k-1) - chi2 <= 0 (one ranking in every dataset)");
  return (nd - 1.0) * chi2 / denom;
}

/// CD = q_alpha * sqrt(k(k+1) / (6N)).
inline double bonferroni_dunn_cd(double q_alpha, std::size_t k, std::size_t n_datasets) {
  if (!(q_alpha > 0.0) || k < 1 || n_datasets < 1)
    throw Error(ErrorCode::invalid_argument, "bonferroni_dunn_cd: inputs must be positive");
  const double kd = static_cast<double>(k), nd = static_cast<double>(n_datasets);
  return q_alpha * std::sqrt(kd * (kd + 1.0) / (6.0 * nd));
}

inline std::optional<double> lookup_f_critical(std::size_t df1, std::size_t df2, double alpha) {
  if (df1 == 1 && df2 == 29 && std::abs(alpha - 0.10) < 1e-12) return 2.88;
  return std::nullopt;
}

inline std::optional<double> lookup_bonferroni_dunn_q(std::size_t k, double alpha) {
  if (k == 2 && std::abs(alpha - 0.10) < 1e-12) return 1.65;
  return std::nullopt;
}

struct SignificanceConfig {
  double alpha = 0.10;
  std::optional<double> f_critical;  // falls back to the lookup
  std::optional<double> q_alpha;     // falls back to the lookup
};

struct PairComparison {
  std::size_t a = 0, b = 0;
  double rank_gap = 0.0;  // |R_a - R_b|
  bool significant = false;
};

struct SignificanceReport {
  std::vector<std::string> methods;
  std::vector<double> average_ranks;
  std::size_t datasets = 0;
  double chi2 = 0.0;
  double ff = 0.0;  // +inf when one ranking holds on every dataset
  std::size_t df1 = 0, df2 = 0;
  double f_critical = 0.0;
  bool reject_null = false;
  double q_alpha = 0.0;
  double critical_difference = 0.0;
  std::vector<PairComparison> pairs;
};

/// Full procedure from average ranks: Friedman, Iman-Davenport against the F
/// critical value, then Bonferroni-Dunn pair tests if the null is rejected.
inline SignificanceReport significance_from_ranks(std::span<const double> average_ranks,
                                                  std::size_t n_datasets,
                                                  std::vector<std::string> methods,
                                                  const SignificanceConfig& cfg) {
  const std::size_t k = average_ranks.size();
  if (methods.empty())
    for (std::size_t j = 0; j < k; ++j) methods.push_back("method" + std::to_string(j + 1));
  if (methods.size() != k) throw Error(ErrorCode::dimension_mismatch, "method names vs ranks");
  if (n_datasets < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 datasets");

  SignificanceReport rep;
  rep.methods = std::move(methods);
  rep.average_ranks.assign(average_ranks.begin(), average_ranks.end());
  rep.datasets = n_datasets;
  rep.df1 = k - 1;
  rep.df2 = (k - 1) * (n_datasets - 1);

  const auto f_crit = cfg.f_critical ? cfg.f_critical : lookup_f_critical(rep.df1, rep.df2, cfg.alpha);
  const auto q = cfg.q_alpha ? cfg.q_alpha : lookup_bonferroni_dunn_q(k, cfg.alpha);
  if (!f_crit)
    throw Error(ErrorCode::missing_critical_value,
                "no F critical value for df=(" + std::to_string(rep.df1) + "," +
                    std::to_string(rep.df2) + ")");
  if (!q) throw Error(ErrorCode::missing_critical_value, "no Bonferroni-Dunn q_alpha for k=" + std::to_string(k));
  rep.f_critical = *f_crit;
  rep.q_alpha = *q;

  rep.chi2 = std::max(0.0, friedman_chi2(average_ranks, n_datasets));
  try {
    rep.ff = iman_davenport(rep.chi2, n_datasets, k);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate_statistic) throw;
    rep.ff = std::numeric_limits<double>::infinity();
  }
  rep.reject_null = rep.ff > rep.f_critical;
  rep.critical_difference = bonferroni_dunn_cd(rep.q_alpha, k, n_datasets);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      const double gap = std::abs(average_ranks[a] - average_ranks[b]);
      rep.pairs.push_back({a, b, gap, rep.reject_null && gap > rep.critical_difference});
    }
  return rep;
}

/// Ranks an accuracy matrix (rows = datasets, columns = methods) and runs the
/// significance procedure on it.
inline SignificanceReport compare_two_methods(const std::vector<std::vector<double>>& accuracy,
                                              std::vector<std::string> methods,
                                              const SignificanceConfig& cfg) {
  const auto ranks = rank_rows(accuracy);
  const auto avg = ranks.average_ranks();
  return significance_from_ranks(avg, ranks.datasets(), std::move(methods), cfg);
}

inline void write_report_text(std::ostream& os, const SignificanceReport& r) {
  const auto flags = os.flags();
  os << std::fixed;
  os << "datasets=" << r.datasets << " methods=" << r.methods.size() << '\n';
  for (std::size_t j = 0; j < r.methods.size(); ++j)
    os << "average_rank[" << r.methods[j] << "]=" << std::setprecision(4) << r.average_ranks[j] << '\n';
  os << std::setprecision(2);
  os << "chi2_F=" << r.chi2 << '\n';
  os << "F_F=" << r.ff << " df=(" << r.df1 << ',' << r.df2 << ") F_crit=" << r.f_critical << '\n';
  os << "friedman_null=" << (r.reject_null ? "rejected" : "accepted") << '\n';
  os << "CD=" << r.critical_difference << " q_alpha=" << r.q_alpha << '\n';
  for (const auto& p : r.pairs) {
    const auto& a = r.methods[p.a];
    const auto& b = r.methods[p.b];
    os << a << " vs " << b << ": rank_gap=" << p.rank_gap
       << (p.rank_gap > r.critical_difference ? " > CD -> " : " <= CD -> ");
    if (p.significant) {
      const auto& better = r.average_ranks[p.a] < r.average_ranks[p.b] ? a : b;
      os << "significant, " << better << " better\n";
    } else {
      os << "not significant\n";
    }
  }
  os.flags(flags);
}

inline void write_report_csv(std::ostream& os, const SignificanceReport& r) {
  const auto flags = os.flags();
  os << std::setprecision(17);
  os << "quantity,value\n";
  os << "datasets," << r.datasets << '\n';
  for (std::size_t j = 0; j < r.methods.size(); ++j)
    os << "average_rank:" << r.methods[j] << ',' << r.average_ranks[j] << '\n';
  os << "chi2_F," << r.chi2 << '\n';
  os << "F_F," << r.ff << '\n';
  os << "F_crit," << r.f_critical << '\n';
  os << "reject_null," << (r.reject_null ? 1 : 0) << '\n';
  os << "q_alpha," << r.q_alpha << '\n';
  os << "CD," << r.critical_difference << '\n';
  for (const auto& p : r.pairs)
    os << "significant:" << r.methods[p.a] << '|' << r.methods[p.b] << ','
       << (p.significant ? 1 : 0) << '\n';
  os.flags(flags);
}

}  // namespace facesig
