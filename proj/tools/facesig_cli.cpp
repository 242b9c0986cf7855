// facesig command-line tool. Every failure prints exactly one line
//   error: code=<name> message="<text>"
// to stderr. Exit codes: 0 success, 1 unexpected failure, 2 usage error,
// 10 + ErrorCode ordinal for library errors (see exit_code below).

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "facesig/facesig.hpp"

using namespace facesig;

namespace {

constexpr int kUsageExit = 2;
constexpr int kInternalExit = 1;

int exit_code(ErrorCode c) { return 10 + static_cast<int>(c); }

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

void print_error(std::string_view code, std::string_view message) {
  std::cerr << "error: code=" << code << " message=\"" << escape(message) << "\"\n";
}

unsigned default_threads() {
  const char* env = std::getenv("FACESIG_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024)
    throw Error(ErrorCode::invalid_argument, std::string("FACESIG_THREADS must be 1..1024, got '") + env + "'");
  return static_cast<unsigned>(v);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) std::cout << text;
  else write_file_atomic(path, text);
}

struct MatcherArgs {
  double lambda = kDefaultLambda;
  std::string matcher = "plain";
  std::string weights;
  std::string source = "logits";
  std::string agg = "max";
  unsigned threads = 0;  // 0 = environment default
};

void add_matcher_flags(CLI::App* sub, MatcherArgs& a, bool batch) {
  sub->add_option("--lambda", a.lambda, "attribute weight in the fused score")->capture_default_str();
  sub->add_option("--matcher", a.matcher, "plain, weighted (trained accuracies) or probe (confidence)")
      ->check(CLI::IsMember({"plain", "weighted", "probe"}))
      ->capture_default_str();
  sub->add_option("--weights", a.weights, "attribute accuracy table for --matcher weighted");
  sub->add_option("--source", a.source, "attribute representation to compare")
      ->check(CLI::IsMember({"logits", "probabilities", "binary"}))
      ->capture_default_str();
  if (batch) {
    sub->add_option("--agg", a.agg, "template score aggregation")
        ->check(CLI::IsMember({"max", "mean"}))
        ->capture_default_str();
    sub->add_option("--threads", a.threads, "worker threads (default: FACESIG_THREADS or 1)")
        ->check(CLI::Range(1u, 1024u));
  }
}

WeightMode weight_mode_of(const std::string& matcher) {
  if (matcher == "weighted") return WeightMode::trained;
  if (matcher == "probe") return WeightMode::probe;
  if (matcher == "plain") return WeightMode::uniform;
  throw Error(ErrorCode::invalid_argument, "unknown matcher '" + matcher + "'");
}

AttributeSource source_of(const std::string& s) {
  if (s == "probabilities") return AttributeSource::probabilities;
  if (s == "binary") return AttributeSource::binary;
  return AttributeSource::logits;
}

IdentifyOptions options_of(const MatcherArgs& a) {
  IdentifyOptions opt;
  opt.fusion.lambda = a.lambda;
  opt.fusion.attribute_source = source_of(a.source);
  opt.weight_mode = weight_mode_of(a.matcher);
  opt.aggregation = a.agg == "mean" ? Aggregation::mean : Aggregation::max;
  if (opt.weight_mode == WeightMode::trained) {
    if (a.weights.empty())
      throw Error(ErrorCode::invalid_argument, "--matcher weighted needs --weights <accuracy table>");
    opt.accuracy = read_accuracy_table(a.weights);
  }
  return opt;
}

unsigned threads_of(const MatcherArgs& a) { return a.threads ? a.threads : default_threads(); }

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + v[i];
  return out;
}

// ---- commands ---------------------------------------------------------------

struct MatchArgs {
  std::string gallery, probe;
  MatcherArgs m;
};

void run_match(const MatchArgs& a) {
  const auto g = read_signature(a.gallery);
  const auto p = read_signature(a.probe);
  const auto opt = options_of(a.m);
  FusionConfig cfg = opt.fusion;
  ScoreBreakdown b;
  switch (opt.weight_mode) {
    case WeightMode::uniform:
      b = match_signatures(g, p, cfg);
      break;
    case WeightMode::trained:
      cfg.scheme = FusionScheme::weighted;
      b = match_signatures(g, p, cfg,
                           weights_from_training_accuracy(*opt.accuracy, p.attributes.attribute_names));
      break;
    case WeightMode::probe:
      cfg.scheme = FusionScheme::weighted;
      b = match_signatures(g, p, cfg, weights_from_probe_confidence(p.attributes));
      break;
  }
  const auto ex = explain_match(g, p);
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "gallery=" << g.image_id << " subject=" << g.subject_id << '\n'
     << "probe=" << p.image_id << " subject=" << p.subject_id << '\n'
     << "matcher=" << a.m.matcher << " lambda=" << cfg.lambda << '\n'
     << "patch_score=" << b.patch_score << '\n'
     << "attribute_score=" << b.attribute_score << '\n'
     << "fused_score=" << b.fused_score << '\n'
     << "non_occluded_pairs=" << b.non_occluded_pairs << '\n'
     << "shared_attributes=" << join(ex.shared) << '\n'
     << "gallery_only_attributes=" << join(ex.gallery_only) << '\n'
     << "probe_only_attributes=" << join(ex.probe_only) << '\n';
  std::cout << os.str();
}

struct IdentifyArgs {
  std::string gallery, probe, out;
  MatcherArgs m;
};

void run_identify(const IdentifyArgs& a) {
  const auto opt = options_of(a.m);
  const auto gallery = load_gallery(a.gallery);
  const auto probes = load_probes(a.probe);
  const auto outcomes = batch_identify(probes.templates, gallery, opt, threads_of(a.m));
  std::ostringstream os;
  write_ranked_csv(os, outcomes);
  emit(a.out, os.str());
}

struct EvaluateArgs {
  std::string splits, out, cells_out, matrix_out, name;
  std::vector<std::size_t> ranks{1};
  std::vector<std::string> methods;
  MatcherArgs m;
};

// "name=matcher[:lambda]"; unspecified fields inherit the shared flags.
MethodSpec parse_method(const std::string& spec, const MatcherArgs& shared) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::invalid_argument, "--method expects name=matcher[:lambda], got '" + spec + "'");
  MatcherArgs a = shared;
  std::string rest = spec.substr(eq + 1);
  if (const auto colon = rest.find(':'); colon != std::string::npos) {
    try {
      std::size_t pos = 0;
      a.lambda = std::stod(rest.substr(colon + 1), &pos);
      if (pos != rest.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "bad lambda in --method '" + spec + "'");
    }
    rest.resize(colon);
  }
  a.matcher = rest;
  return {spec.substr(0, eq), options_of(a)};
}

void run_evaluate(const EvaluateArgs& a) {
  const auto splits = load_splits(a.splits);
  const unsigned threads = threads_of(a.m);
  if (!a.methods.empty()) {
    std::vector<MethodSpec> methods;
    for (const auto& s : a.methods) methods.push_back(parse_method(s, a.m));
    const auto matrix = compare_methods(methods, splits, threads);
    for (const auto& f : matrix.failures) std::cerr << "warning: " << f << '\n';
    std::ostringstream os;
    write_matrix_csv(os, matrix);
    emit(a.matrix_out, os.str());
    return;
  }
  const auto opt = options_of(a.m);
  std::size_t max_rank = 1;
  for (auto k : a.ranks) {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "--ranks values must be >= 1");
    max_rank = std::max(max_rank, k);
  }
  std::vector<AccuracyReport> reports;
  for (const auto& s : splits) reports.push_back(evaluate_split(s, opt, max_rank, threads));
  std::ostringstream os;
  write_accuracy_csv(os, a.name.empty() ? a.m.matcher : a.name, reports, a.ranks);
  emit(a.out, os.str());
  if (!a.cells_out.empty()) {
    std::ostringstream cells;
    for (const auto& r : reports) {
      if (!r.cells) continue;
      cells << "# split " << r.split << '\n';
      write_cell_grid_csv(cells, *r.cells);
    }
    write_file_atomic(a.cells_out, cells.str());
  }
}

struct GridArgs {
  std::string splits, grid = "0:0.1:1", out;
  MatcherArgs m;
};

void run_gridsearch(const GridArgs& a) {
  const auto splits = load_splits(a.splits);
  const auto grid = parse_grid(a.grid);
  const auto sweep = lambda_grid_search(splits, grid, options_of(a.m), threads_of(a.m));
  if (!a.out.empty()) {
    std::ostringstream os;
    os << "lambda,mean_rank1\n";
    for (const auto& [l, acc] : sweep.curve) os << format_score(l) << ',' << format_percent(acc) << '\n';
    write_file_atomic(a.out, os.str());
  }
  std::cout << "best_lambda=" << format_score(sweep.best_lambda) << '\n';
}

struct StatsArgs {
  std::string matrix, out;
  std::vector<double> avg_ranks;
  std::vector<std::string> methods;
  std::size_t datasets = 0;
  double alpha = 0.10;
  std::optional<double> fcrit, qalpha;
};

void run_stats(const StatsArgs& a) {
  SignificanceConfig cfg{a.alpha, a.fcrit, a.qalpha};
  SignificanceReport r;
  if (!a.matrix.empty()) {
    const auto m = parse_matrix_csv(read_file(a.matrix));
    r = compare_two_methods(m.values, m.methods, cfg);
  } else {
    if (a.avg_ranks.empty() || a.datasets == 0)
      throw Error(ErrorCode::invalid_argument, "stats needs --matrix, or --avg-ranks with --datasets");
    r = significance_from_ranks(a.avg_ranks, a.datasets, a.methods, cfg);
  }
  std::ostringstream text;
  write_report_text(text, r);
  std::cout << text.str();
  if (!a.out.empty()) {
    std::ostringstream csv;
    write_report_csv(csv, r);
    write_file_atomic(a.out, csv.str());
  }
}

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a) {
  SynthConfig cfg = a.config.empty() ? SynthConfig{} : parse_synth_config(read_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const auto bench = generate_benchmark(cfg);
  write_benchmark(a.out, bench);
  std::cout << "wrote " << bench.gallery.size() << " gallery and " << bench.probes.size()
            << " probe signatures to " << a.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-component face signature matching, identification and evaluation"};
  app.name("facesig");
  app.require_subcommand(1, 1);

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "score one gallery signature against one probe");
  match_cmd->add_option("gallery", match.gallery, "gallery signature file")->required();
  match_cmd->add_option("probe", match.probe, "probe signature file")->required();
  add_matcher_flags(match_cmd, match.m, false);

  IdentifyArgs ident;
  auto* ident_cmd = app.add_subcommand("identify", "rank gallery subjects for every probe template");
  ident_cmd->add_option("--gallery", ident.gallery, "gallery manifest")->required();
  ident_cmd->add_option("--probe", ident.probe, "probe manifest")->required();
  ident_cmd->add_option("--out", ident.out, "ranked-list CSV (default: stdout)");
  add_matcher_flags(ident_cmd, ident.m, true);

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "rank-k accuracy over evaluation splits");
  eval_cmd->add_option("--splits", eval.splits, "split list: name,gallery_manifest,probe_manifest")->required();
  eval_cmd->add_option("--ranks", eval.ranks, "ranks to report")->delimiter(',');
  eval_cmd->add_option("--name", eval.name, "method label in the CSV (default: matcher)");
  eval_cmd->add_option("--out", eval.out, "accuracy CSV (default: stdout)");
  eval_cmd->add_option("--cells-out", eval.cells_out, "per-cell accuracy grids");
  eval_cmd->add_option("--method", eval.methods, "name=matcher[:lambda]; two or more build an accuracy matrix");
  eval_cmd->add_option("--matrix-out", eval.matrix_out, "accuracy matrix CSV (default: stdout)");
  add_matcher_flags(eval_cmd, eval.m, true);

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("gridsearch", "pick lambda by mean rank-1 over splits");
  grid_cmd->add_option("--splits", grid.splits, "split list")->required();
  grid_cmd->add_option("--grid", grid.grid, "start:step:stop or a comma list")->capture_default_str();
  grid_cmd->add_option("--out", grid.out, "lambda,mean_rank1 curve CSV");
  add_matcher_flags(grid_cmd, grid.m, true);

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Friedman / Iman-Davenport / Bonferroni-Dunn report");
  auto* matrix_opt = stats_cmd->add_option("--matrix", stats.matrix, "accuracy matrix CSV");
  auto* ranks_opt = stats_cmd->add_option("--avg-ranks", stats.avg_ranks, "average ranks, comma separated")
                        ->delimiter(',');
  stats_cmd->add_option("--datasets", stats.datasets, "number of datasets behind --avg-ranks");
  stats_cmd->add_option("--methods", stats.methods, "method names for --avg-ranks")->delimiter(',');
  stats_cmd->add_option("--alpha", stats.alpha, "significance level")->capture_default_str();
  stats_cmd->add_option("--fcrit", stats.fcrit, "F critical value (default: built-in table)");
  stats_cmd->add_option("--qalpha", stats.qalpha, "Bonferroni-Dunn q (default: built-in table)");
  stats_cmd->add_option("--out", stats.out, "report CSV");
  matrix_opt->excludes(ranks_opt);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic benchmark");
  synth_cmd->add_option("--config", synth.config, "key = value config file");
  synth_cmd->add_option("--seed", synth.seed, "overrides the config seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kUsageExit;
  }

  try {
    if (*match_cmd) run_match(match);
    else if (*ident_cmd) run_identify(ident);
    else if (*eval_cmd) run_evaluate(eval);
    else if (*grid_cmd) run_gridsearch(grid);
    else if (*stats_cmd) run_stats(stats);
    else if (*synth_cmd) run_synth(synth);
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kInternalExit;
  }
  return 0;
}
