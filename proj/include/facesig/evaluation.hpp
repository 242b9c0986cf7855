#pragma once

// Rank-k accuracy, per-cell (e.g. pose grid) tables, the fusion-weight
// sweep, and the method x split accuracy matrix fed to significance tests.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "facesig/error.hpp"
#include "facesig/identification.hpp"

namespace facesig {

// probe template id -> true subject id
using Truth = std::map<std::string, std::string>;
// probe template id -> cell label
using CellLabels = std::map<std::string, std::string>;

struct EvaluationSplit {
  std::string name;
  Gallery gallery;
  std::vector<Template> probes;
  Truth truth;
  CellLabels cells;  // optional
};

/// Turns batch outcomes into ranked lists; failed probes become empty lists,
/// which every rank-k tally counts as a miss.
inline std::vector<RankedList> ranked_lists(std::span<const IdentifyOutcome> outcomes) {
  std::vector<RankedList> out;
  out.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    if (o.ranked) out.push_back(*o.ranked);
    else out.push_back(RankedList{o.probe_id, {}, {}});
  }
  return out;
}

namespace detail {

inline bool hit_at(const RankedList& list, const Truth& truth, std::size_t k) {
  auto it = truth.find(list.probe_id);
  if (it == truth.end())
    throw Error(ErrorCode::invalid_argument, "no ground truth for probe " + list.probe_id);
  const std::size_t top = std::min(k, list.entries.size());
  for (std::size_t r = 0; r < top; ++r)
    if (list.entries[r].subject_id == it->second) return true;
  return false;
}

}  // namespace detail

/// Percentage of probes whose true subject is among the top k entries.
inline double rank_k_accuracy(std::span<const RankedList> lists, const Truth& truth,
                              std::size_t k) {
  if (lists.empty()) throw Error(ErrorCode::empty_input, "rank_k_accuracy: no probes");
  if (k < 1) throw Error(ErrorCode::invalid_argument, "rank_k_accuracy: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& l : lists) hits += detail::hit_at(l, truth, k) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(lists.size());
}

struct CellTable {
  std::map<std::string, double> accuracy;   // rank-1 per cell, only cells with probes
  std::map<std::string, std::size_t> count;
  double overall = 0.0;

  bool operator==(const CellTable&) const = default;
};

inline CellTable per_cell_accuracy(std::span<const RankedList> lists, const Truth& truth,
                                   const CellLabels& labels) {
  if (lists.empty()) throw Error(ErrorCode::empty_input, "per_cell_accuracy: no probes");
  CellTable out;
  std::map<std::string, std::size_t> hits;
  std::size_t total_hits = 0;
  for (const auto& l : lists) {
    auto it = labels.find(l.probe_id);
    if (it == labels.end())
      throw Error(ErrorCode::invalid_argument, "probe " + l.probe_id + " has no cell label");
    const bool hit = detail::hit_at(l, truth, 1);
    ++out.count[it->second];
    hits[it->second] += hit ? 1 : 0;
    total_hits += hit ? 1 : 0;
  }
  for (const auto& [cell, n] : out.count)
    out.accuracy[cell] = 100.0 * static_cast<double>(hits[cell]) / static_cast<double>(n);
  out.overall = 100.0 * static_cast<double>(total_hits) / static_cast<double>(lists.size());
  return out;
}

struct AccuracyReport {
  std::string split;
  std::vector<double> rank_k;  // rank_k[k-1], nondecreasing
  std::optional<CellTable> cells;
  std::size_t probes_evaluated = 0;
  std::size_t probes_failed = 0;
};

inline AccuracyReport evaluate_split(const EvaluationSplit& split, const IdentifyOptions& opt,
                                     std::size_t max_rank = 1, unsigned threads = 1) {
  if (max_rank < 1) throw Error(ErrorCode::invalid_argument, "max_rank must be >= 1");
  for (const auto& [probe, subject] : split.truth) {
    bool found = false;
    for (const auto& t : split.gallery.templates()) found = found || t.subject_id() == subject;
    if (!found)
      throw Error(ErrorCode::invalid_argument, "split " + split.name + ": probe " + probe +
                                                   " has subject " + subject +
                                                   " missing from the gallery");
  }
  const auto outcomes = batch_identify(split.probes, split.gallery, opt, threads);
  const auto lists = ranked_lists(outcomes);
  AccuracyReport rep;
  rep.split = split.name;
  rep.probes_evaluated = lists.size();
  for (const auto& o : outcomes) rep.probes_failed += o.ok() ? 0 : 1;
  for (std::size_t k = 1; k <= max_rank; ++k)
    rep.rank_k.push_back(rank_k_accuracy(lists, split.truth, k));
  if (!split.cells.empty()) rep.cells = per_cell_accuracy(lists, split.truth, split.cells);
  return rep;
}

struct LambdaSweep {
  double best_lambda = 0.0;
  std::vector<std::pair<double, double>> curve;  // (lambda, mean rank-1 over splits)
};

/// Mean rank-1 across splits for each lambda; ties go to the smallest lambda.
inline LambdaSweep lambda_grid_search(std::span<const EvaluationSplit> splits,
                                      std::span<const double> grid, IdentifyOptions opt,
                                      unsigned threads = 1) {
  if (splits.empty()) throw Error(ErrorCode::empty_input, "lambda_grid_search: no splits");
  if (grid.empty()) throw Error(ErrorCode::empty_input, "lambda_grid_search: empty grid");
  for (double l : grid)
    if (!std::isfinite(l) || l < 0.0)
      throw Error(ErrorCode::invalid_argument, "lambda grid values must be finite and >= 0");
  LambdaSweep out;
  double best_acc = -1.0;
  for (double l : grid) {
    opt.fusion.lambda = l;
    double sum = 0.0;
    for (const auto& s : splits) sum += evaluate_split(s, opt, 1, threads).rank_k[0];
    const double mean = sum / static_cast<double>(splits.size());
    out.curve.emplace_back(l, mean);
    if (mean > best_acc || (mean == best_acc && l < out.best_lambda)) {
      best_acc = mean;
      out.best_lambda = l;
    }
  }
  return out;
}

/// Expands "start:step:stop" (inclusive) or a comma list into lambda values.
inline std::vector<double> parse_grid(const std::string& spec) {
  auto to_double = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse_error, "bad grid value '" + s + "'");
    }
  };
  std::vector<std::string> parts;
  const char sep = spec.find(':') != std::string::npos ? ':' : ',';
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, sep);) parts.push_back(item);
  std::vector<double> out;
  if (sep == ',') {
    for (const auto& p : parts) out.push_back(to_double(p));
    return out;
  }
  if (parts.size() != 3) throw Error(ErrorCode::parse_error, "grid must be start:step:stop");
  const double start = to_double(parts[0]), step = to_double(parts[1]), stop = to_double(parts[2]);
  if (!(step > 0.0) || stop < start)
    throw Error(ErrorCode::parse_error, "grid needs step > 0 and stop >= start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  return out;
}

struct MethodSpec {
  std::string name;
  IdentifyOptions options;
};

// rows = splits (datasets), columns = methods
struct AccuracyMatrix {
  std::vector<std::string> methods;
  std::vector<std::string> splits;
  std::vector<std::vector<double>> values;  // values[split][method]; NaN = failed
  std::vector<std::string> failures;
};

inline AccuracyMatrix compare_methods(std::span<const MethodSpec> methods,
                                      std::span<const EvaluationSplit> splits,
                                      unsigned threads = 1) {
  if (methods.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 methods");
  if (splits.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 splits");
  AccuracyMatrix out;
  for (const auto& m : methods) out.methods.push_back(m.name);
  for (const auto& s : splits) {
    out.splits.push_back(s.name);
    auto& row = out.values.emplace_back();
    for (const auto& m : methods) {
      try {
        row.push_back(evaluate_split(s, m.options, 1, threads).rank_k[0]);
      } catch (const Error& e) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        out.failures.push_back(m.name + " on " + s.name + ": " + e.what());
      }
    }
  }
  return out;
}

// ---- CSV output -----------------------------------------------------------

inline std::string format_percent(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

/// Rows of "method,split,k,accuracy" for each requested k.
inline void write_accuracy_csv(std::ostream& os, const std::string& method,
                               std::span<const AccuracyReport> reports,
                               std::span<const std::size_t> ks, bool header = true) {
  if (header) os << "method,split,k,accuracy\n";
  for (const auto& r : reports)
    for (std::size_t k : ks) {
      if (k < 1 || k > r.rank_k.size())
        throw Error(ErrorCode::invalid_argument, "rank " + std::to_string(k) + " not evaluated");
      os << method << ',' << r.split << ',' << k << ',' << format_percent(r.rank_k[k - 1]) << '\n';
    }
}

namespace detail {

// Numeric labels sort numerically, everything else lexicographically after.
inline bool label_less(const std::string& a, const std::string& b) {
  double x = 0, y = 0;
  auto rx = std::from_chars(a.data(), a.data() + a.size(), x);
  auto ry = std::from_chars(b.data(), b.data() + b.size(), y);
  const bool na = rx.ec == std::errc() && rx.ptr == a.data() + a.size();
  const bool nb = ry.ec == std::errc() && ry.ptr == b.data() + b.size();
  if (na && nb) return x < y;
  if (na != nb) return na;
  return a < b;
}

}  // namespace detail

/// Writes a rank-1 cell table. Labels of the form "row:col" render as a grid
/// with "-" for empty cells; other labels render as "cell,accuracy" rows.
inline void write_cell_grid_csv(std::ostream& os, const CellTable& table) {
  bool grid = !table.accuracy.empty();
  for (const auto& [label, _] : table.accuracy) grid = grid && label.find(':') != std::string::npos;
  if (!grid) {
    os << "cell,accuracy\n";
    for (const auto& [label, acc] : table.accuracy) os << label << ',' << format_percent(acc) << '\n';
  } else {
    auto cmp = [](const std::string& a, const std::string& b) { return detail::label_less(a, b); };
    std::set<std::string, decltype(cmp)> rows(cmp), cols(cmp);
    for (const auto& [label, _] : table.accuracy) {
      const auto c = label.find(':');
      rows.insert(label.substr(0, c));
      cols.insert(label.substr(c + 1));
    }
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
    for (const auto& r : rows) {
      os << r;
      for (const auto& c : cols) {
        auto it = table.accuracy.find(r + ":" + c);
        os << ',' << (it == table.accuracy.end() ? std::string("-") : format_percent(it->second));
      }
      os << '\n';
    }
  }
  os << "overall," << format_percent(table.overall) << '\n';
}

/// "split,<method...>" header followed by one row of rank-1 values per split.
inline void write_matrix_csv(std::ostream& os, const AccuracyMatrix& m) {
  os << "split";
  for (const auto& name : m.methods) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < m.splits.size(); ++i) {
    os << m.splits[i];
    for (double v : m.values[i]) os << ',' << format_percent(v);
    os << '\n';
  }
}

}  // namespace facesig
