#include "ecp/cli.hpp"

#include <fstream>
#include <map>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ecp/calibration.hpp"
#include "ecp/data_io.hpp"
#include "ecp/error.hpp"
#include "ecp/parallel.hpp"
#include "ecp/semantic_field.hpp"
#include "ecp/stats.hpp"
#include "ecp/strategy.hpp"

namespace ecp::cli {

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return kUsage;
    case ErrorKind::DegenerateFit:
    case ErrorKind::DegenerateInput: return kDegenerate;
    case ErrorKind::MissingParam:
    case ErrorKind::MissingEmbedding:
    case ErrorKind::DuplicateId:
    case ErrorKind::FormatError:
    case ErrorKind::ParseError:
    case ErrorKind::IoError: return kFormat;
  }
  return kFormat;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? io::format_number(*v) : "nan"; }

/// Output sink: the --out file when given, otherwise standard output.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback), path_(path) {
    if (!path.empty()) {
      file_.open(path, std::ios::trunc);
      if (!file_) fail(ErrorKind::IoError, "cannot open '" + path + "' for writing");
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) fail(ErrorKind::IoError, "failed writing '" + path_ + "'");
  }

 private:
  std::ostream* stream_;
  std::ofstream file_;
  std::string path_;
};

StrategyKind parse_strategy_flag(const std::string& text) {
  if (!text.empty() && text.front() == '{') return io::parse_strategy(text);
  return io::parse_strategy("\"" + text + "\"");
}

struct MetricFlags {
  std::string metric = "projection";
  std::string rule = "independent";
};

void add_metric_flags(CLI::App* cmd, MetricFlags& flags) {
  cmd->add_option("--metric", flags.metric, "Field metric: projection, cosine, l1, l2, none")
      ->capture_default_str();
  cmd->add_option("--rule", flags.rule, "Effective sample rule: independent, log_corrected")->capture_default_str();
}

PowerContext make_context(const MetricFlags& flags, const DemoPool* pool) {
  return {pool, parse_field_metric(flags.metric), parse_sample_rule(flags.rule)};
}

void print_summary_header(std::ostream& out) { out << "split,runs,bins,spearman,pearson,r_squared\n"; }

void print_summary(std::ostream& out, const std::string& split, std::size_t runs, const CorrelationSummary& s) {
  out << split << ',' << runs << ',' << s.bins << ',' << fmt_optional(s.spearman) << ',' << fmt_optional(s.pearson)
      << ',' << fmt_optional(s.r_squared) << '\n';
}

struct Sweep {
  std::string variable;
  std::uint64_t from = 1;
  std::uint64_t to = 1;
};

Sweep parse_sweep(const std::string& text) {
  static const std::regex pattern(R"(^\s*([nk])\s*=\s*([0-9]+)\s*\.\.\s*([0-9]+)\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) {
    fail(ErrorKind::InvalidInput, "--sweep must look like n=1..100 or k=1..20");
  }
  Sweep s{m[1], std::stoull(m[2]), std::stoull(m[3])};
  if (s.from < 1 || s.to < s.from) fail(ErrorKind::InvalidInput, "--sweep range must satisfy 1 <= from <= to");
  return s;
}

/// Copy of `spec` with its sample count (n) or verifier count (k) replaced.
StrategySpec with_count(const StrategySpec& spec, const std::string& variable, std::uint64_t value) {
  StrategySpec out = spec;
  bool applied = false;
  std::visit(
      [&](auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SelfConsistency> || std::is_same_v<T, Coverage>) {
          if (variable == "n") {
            s.n = value;
            if (!s.branches.empty()) fail(ErrorKind::InvalidInput, "cannot sweep n over explicit branch lists");
            applied = true;
          }
        } else if constexpr (std::is_same_v<T, FineGrainedSC>) {
          if (variable == "n") {
            s.n = value;
            applied = true;
          }
        } else if constexpr (std::is_same_v<T, ChainOfVerification>) {
          if (variable == "n") s.n = value;
          if (variable == "k") s.k = value;
          applied = true;
        }
      },
      out.kind);
  if (!applied) {
    fail(ErrorKind::InvalidInput,
         "strategy '" + std::string(spec.tag()) + "' has no '" + variable + "' to sweep");
  }
  return out;
}

std::uint64_t current_count(const StrategySpec& spec) {
  return std::visit(
      [](const auto& s) -> std::uint64_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (requires { s.n; }) {
          (void)sizeof(T);
          return s.n;
        } else {
          return 1;
        }
      },
      spec.kind);
}

/// Pool of candidates for a query: `demos` when given, else `pool` without the query itself.
DemoPool candidate_pool(const DemoPool& pool, const DemoPool* demos, const std::string& query_id) {
  if (demos != nullptr) return *demos;
  DemoPool out;
  for (const auto& e : pool.entries()) {
    if (e.vector.id != query_id) out.add(e.vector, e.payload);
  }
  return out;
}

RetrievalPolicy make_policy(const std::string& name, std::uint64_t seed, std::size_t m) {
  RetrievalPolicy policy;
  policy.tag = parse_policy_tag(name);
  policy.seed = seed;
  policy.m = m;
  return policy;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Electrical-circuit model of prompting strategies: fit, predict, validate, simulate"};
  app.name("ecp");
  app.require_subcommand(1);

  bool lenient = false;
  app.add_flag("--lenient", lenient, "Warn on unknown fields in task files instead of failing");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit model constants on a validation split and write a params file");
  std::string fit_tasks, fit_embeddings, fit_out, fit_gauge;
  double fit_val_frac = 0.1;
  std::uint64_t fit_seed = 0;
  BinSpec fit_bins;
  bool fit_domain = false;
  bool fit_direct = false;
  MetricFlags fit_metric;
  fit_cmd->add_option("--tasks", fit_tasks, "Task file (JSON lines)")->required();
  fit_cmd->add_option("--embeddings", fit_embeddings, "Embedding file (text or binary)");
  fit_cmd->add_option("--out", fit_out, "Params file to write")->required();
  fit_cmd->add_option("--val-frac", fit_val_frac, "Validation fraction")->capture_default_str();
  fit_cmd->add_option("--seed", fit_seed, "Split seed")->capture_default_str();
  fit_cmd->add_option("--gauge-model", fit_gauge, "Model whose emf is pinned to 1 (default: first by name)");
  fit_cmd->add_option("--bin-width", fit_bins.width, "Power bin width")->capture_default_str();
  fit_cmd->add_option("--min-count", fit_bins.min_count, "Minimum runs per bin")->capture_default_str();
  fit_cmd->add_flag("--fit-domain", fit_domain, "Fit one domain constant per task family");
  fit_cmd->add_flag("--fit-direct-answer", fit_direct, "Also grid-search direct-answer multipliers");
  add_metric_flags(fit_cmd, fit_metric);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict power and accuracy per task");
  std::string pr_tasks, pr_params, pr_model, pr_strategy = "zero_shot", pr_embeddings, pr_demos, pr_rep, pr_policy = "top_k",
                                              pr_out;
  std::size_t pr_k = 0;
  std::size_t pr_m = 0;
  std::uint64_t pr_seed = 0;
  MetricFlags pr_metric;
  predict_cmd->add_option("--tasks", pr_tasks, "Task file")->required();
  predict_cmd->add_option("--params", pr_params, "Params file")->required();
  predict_cmd->add_option("--model", pr_model, "Model name")->required();
  predict_cmd->add_option("--strategy", pr_strategy, "Strategy tag or JSON object")->capture_default_str();
  predict_cmd->add_option("--embeddings", pr_embeddings, "Embedding file holding the task query vectors");
  predict_cmd->add_option("--demos", pr_demos, "Demonstration pool (default: --embeddings minus the query)");
  predict_cmd->add_option("--representation", pr_rep, "Representation label selecting lambda");
  predict_cmd->add_option("--policy", pr_policy, "Retrieval policy")->capture_default_str();
  predict_cmd->add_option("--k", pr_k, "Demonstrations per task (0: zero-shot)")->capture_default_str();
  predict_cmd->add_option("--m", pr_m, "Candidate count for diverse_among_top");
  predict_cmd->add_option("--seed", pr_seed, "Seed for the random policy")->capture_default_str();
  predict_cmd->add_option("--out", pr_out, "Output csv (default: stdout)");
  add_metric_flags(predict_cmd, pr_metric);

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Bin runs by predicted power and correlate with accuracy");
  std::string va_tasks, va_params, va_embeddings, va_out;
  BinSpec va_bins;
  bool va_by_group = false;
  MetricFlags va_metric;
  validate_cmd->add_option("--tasks", va_tasks, "Task file")->required();
  validate_cmd->add_option("--params", va_params, "Params file")->required();
  validate_cmd->add_option("--embeddings", va_embeddings, "Embedding file");
  validate_cmd->add_option("--bin-width", va_bins.width, "Power bin width")->capture_default_str();
  validate_cmd->add_option("--min-count", va_bins.min_count, "Minimum runs per bin")->capture_default_str();
  validate_cmd->add_option("--out", va_out, "Bins csv to write");
  validate_cmd->add_flag("--by-group", va_by_group, "Also emit bins per (model, strategy)");
  add_metric_flags(validate_cmd, va_metric);

  // simulate
  auto* simulate_cmd = app.add_subcommand("simulate", "Resistance and power of a strategy, optionally swept");
  std::string si_file, si_sweep, si_rule, si_out;
  simulate_cmd->add_option("--strategy-file", si_file, "Strategy description (JSON)")->required();
  simulate_cmd->add_option("--sweep", si_sweep, "Sweep such as n=1..100 or k=1..20");
  simulate_cmd->add_option("--rule", si_rule, "Override the file's effective sample rule");
  simulate_cmd->add_option("--out", si_out, "Output csv (default: stdout)");

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Select demonstrations for a query");
  std::string re_embeddings, re_queries, re_query, re_policy = "top_k", re_out;
  std::size_t re_k = 1;
  std::size_t re_m = 0;
  std::uint64_t re_seed = 0;
  retrieve_cmd->add_option("--embeddings", re_embeddings, "Demonstration pool")->required();
  retrieve_cmd->add_option("--queries", re_queries, "Separate query embedding file");
  retrieve_cmd->add_option("--query-id", re_query, "Query id")->required();
  retrieve_cmd->add_option("--policy", re_policy, "Retrieval policy")->capture_default_str();
  retrieve_cmd->add_option("--k", re_k, "Number of demonstrations")->capture_default_str();
  retrieve_cmd->add_option("--m", re_m, "Candidate count for diverse_among_top");
  retrieve_cmd->add_option("--seed", re_seed, "Seed for the random policy")->capture_default_str();
  retrieve_cmd->add_option("--out", re_out, "Output csv (default: stdout)");

  // annotate
  auto* annotate_cmd = app.add_subcommand("annotate", "Count planning steps and local operations in rationales");
  std::string an_file, an_out;
  annotate_cmd->add_option("--rationales", an_file, "JSON lines with id and text")->required();
  annotate_cmd->add_option("--out", an_out, "Output csv (default: stdout)");

  // report
  auto* report_cmd = app.add_subcommand("report", "Render a bins csv as csv or an SVG scatter");
  std::string rp_bins, rp_format = "csv", rp_out, rp_title;
  bool rp_line = false;
  report_cmd->add_option("--bins", rp_bins, "Bins csv")->required();
  report_cmd->add_option("--format", rp_format, "csv or svg-scatter")->capture_default_str();
  report_cmd->add_option("--out", rp_out, "Output file (default: stdout)");
  report_cmd->add_option("--title", rp_title, "SVG title");
  report_cmd->add_flag("--fit-line", rp_line, "Overlay the least-squares line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return kUsage;
  }

  try {
    const io::LoadOptions load_options{lenient};
    const auto load_tasks = [&](const std::string& path) {
      auto loaded = io::load_tasks(path, load_options);
      for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
      return std::move(loaded.tasks);
    };
    const auto maybe_pool = [](const std::string& path) -> std::optional<DemoPool> {
      if (path.empty()) return std::nullopt;
      return io::load_embeddings(path);
    };

    if (*fit_cmd) {
      const auto tasks = load_tasks(fit_tasks);
      const auto pool = maybe_pool(fit_embeddings);
      FitOptions options;
      options.validation_fraction = fit_val_frac;
      options.seed = fit_seed;
      options.gauge_model = fit_gauge;
      options.context = make_context(fit_metric, pool ? &*pool : nullptr);
      options.bins = fit_bins;
      options.fit_domain_constants = fit_domain;
      auto report = fit(tasks, options);
      if (fit_direct) {
        report.params.direct_answer = fit_direct_answer_multipliers(tasks, report.params, options);
      }
      io::save_params(report.params, fit_out);
      print_summary_header(out);
      print_summary(out, "validation", report.validation_runs, report.validation);
      print_summary(out, "held_out", report.held_out_runs, report.held_out);
      err << "fit: " << (report.converged ? "converged" : "not converged") << " after " << report.sweeps
          << " sweeps, objective " << io::format_number(report.objective) << '\n';
      return kOk;
    }

    if (*predict_cmd) {
      const auto tasks = load_tasks(pr_tasks);
      const auto params = io::load_params(pr_params);
      const auto strategy = parse_strategy_flag(pr_strategy);
      const auto rule = parse_sample_rule(pr_metric.rule);
      const auto metric = parse_field_metric(pr_metric.metric);
      const auto pool = maybe_pool(pr_embeddings);
      const auto demos = maybe_pool(pr_demos);
      if (pr_k > 0 && !pool) fail(ErrorKind::InvalidInput, "--k needs --embeddings");
      const auto policy = make_policy(pr_policy, pr_seed, pr_m);

      Sink sink(pr_out, out);
      *sink << "task_id,power,predicted_accuracy\n";
      for (const auto& task : tasks) {
        std::optional<DemoSelection> selection;
        std::optional<DemoPool> merged;
        if (pr_k > 0) {
          if (!task.embedding_id) {
            fail(ErrorKind::MissingEmbedding, "task '" + task.task_id + "' has no embedding_id");
          }
          const auto& query = pool->at(*task.embedding_id);
          const auto candidates = candidate_pool(*pool, demos ? &*demos : nullptr, query.id);
          selection = DemoSelection{pr_rep, metric, retrieve(query, candidates, policy, pr_k), nullptr};
          // Query and demonstrations may live in different files.
          merged = *pool;
          if (demos) {
            for (const auto& e : demos->entries()) {
              if (merged->find(e.vector.id) == nullptr) merged->add(e.vector, e.payload);
            }
          }
          selection->pool = &*merged;
        }
        const auto p = predict(task, pr_model, params, selection ? &*selection : nullptr, strategy, rule);
        *sink << io::csv_field(task.task_id) << ',' << io::format_number(p.power) << ','
              << io::format_number(p.accuracy) << '\n';
      }
      sink.close();
      return kOk;
    }

    if (*validate_cmd) {
      const auto tasks = load_tasks(va_tasks);
      const auto params = io::load_params(va_params);
      const auto pool = maybe_pool(va_embeddings);
      const auto context = make_context(va_metric, pool ? &*pool : nullptr);

      std::vector<Outcome> outcomes;
      std::map<std::pair<std::string, std::string>, std::vector<Outcome>> groups;
      for (const auto& task : tasks) {
        for (const auto& run : task.runs) {
          const Outcome o{run_power(task, run, params, context), run.correct};
          outcomes.push_back(o);
          if (va_by_group) groups[{run.model, std::string(strategy_tag(run.strategy))}].push_back(o);
        }
      }
      if (outcomes.empty()) fail(ErrorKind::DegenerateInput, "no runs to validate");
      const auto bins = bin_by_power(outcomes, va_bins);
      const auto summary = summarize_bins(bins);
      print_summary_header(out);
      print_summary(out, "all", outcomes.size(), summary);

      std::vector<io::ReportRow> rows;
      for (const auto& b : bins) rows.push_back({b.power_mid, b.accuracy, b.count, "all", "all"});
      for (const auto& [key, group] : groups) {
        for (const auto& b : bin_by_power(group, va_bins)) {
          rows.push_back({b.power_mid, b.accuracy, b.count, key.first, key.second});
        }
      }
      if (!va_out.empty()) io::write_report(rows, va_out, io::ReportFormat::csv);
      if (!summary.spearman) {
        err << "validate: correlations undefined (" << summary.bins << " bins)\n";
        return kDegenerate;
      }
      return kOk;
    }

    if (*simulate_cmd) {
      auto config = io::load_strategy_file(si_file);
      if (!si_rule.empty()) config.rule = parse_sample_rule(si_rule);
      std::string variable = "n";
      std::vector<std::uint64_t> values;
      if (!si_sweep.empty()) {
        const auto sweep = parse_sweep(si_sweep);
        variable = sweep.variable;
        for (auto v = sweep.from; v <= sweep.to; ++v) values.push_back(v);
      } else {
        values.push_back(current_count(config.spec));
      }
      struct Row {
        double resistance = 0.0;
        double power = 0.0;
      };
      std::vector<Row> rows(values.size());
      parallel_for(values.size(), [&](std::size_t i) {
        const auto spec = si_sweep.empty() ? config.spec : with_count(config.spec, variable, values[i]);
        rows[i].resistance = strategy_resistance(spec, config.r0, config.rule);
        rows[i].power = strategy_power(spec, config.emf_model, config.e_itl, config.r0, config.rule);
      });
      Sink sink(si_out, out);
      *sink << variable << ",resistance,power\n";
      for (std::size_t i = 0; i < values.size(); ++i) {
        *sink << values[i] << ',' << io::format_number(rows[i].resistance) << ',' << io::format_number(rows[i].power)
              << '\n';
      }
      sink.close();
      return kOk;
    }

    if (*retrieve_cmd) {
      const auto pool = io::load_embeddings(re_embeddings);
      const auto queries = maybe_pool(re_queries);
      const auto& query = queries ? queries->at(re_query) : pool.at(re_query);
      const auto candidates = candidate_pool(pool, queries ? &pool : nullptr, re_query);
      const auto ids = retrieve(query, candidates, make_policy(re_policy, re_seed, re_m), re_k);
      Sink sink(re_out, out);
      *sink << "rank,id,projection\n";
      for (std::size_t i = 0; i < ids.size(); ++i) {
        *sink << i + 1 << ',' << io::csv_field(ids[i]) << ','
              << io::format_number(projection(query, candidates.at(ids[i]))) << '\n';
      }
      sink.close();
      return kOk;
    }

    if (*annotate_cmd) {
      std::ifstream in(an_file);
      if (!in) fail(ErrorKind::IoError, "cannot open '" + an_file + "'");
      Sink sink(an_out, out);
      *sink << "id,plan_steps,local_ops\n";
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object() || !row.contains("id") || !row.contains("text") ||
            !row["id"].is_string() || !row["text"].is_string()) {
          fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected {\"id\": ..., \"text\": ...}");
        }
        const auto a = io::annotate_steps(row["text"].get<std::string>());
        *sink << io::csv_field(row["id"].get<std::string>()) << ',' << a.plan_steps << ',' << a.local_ops << '\n';
      }
      sink.close();
      return kOk;
    }

    if (*report_cmd) {
      const auto rows = io::read_report_csv(rp_bins);
      const auto format = io::parse_report_format(rp_format);
      const io::SvgOptions svg{rp_line, rp_title};
      if (!rp_out.empty()) {
        io::write_report(rows, rp_out, format, svg);
      } else if (format == io::ReportFormat::csv) {
        io::write_report_csv(rows, out);
      } else {
        io::write_report_svg(rows, out, svg);
      }
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
  return kUsage;
}

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace ecp::cli
