#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ecp/dataset.hpp"
#include "ecp/params.hpp"
#include "ecp/semantic_field.hpp"
#include "ecp/strategy.hpp"

namespace ecp::io {

struct LoadOptions {
  /// Unknown fields become warnings instead of ParseError.
  bool lenient = false;
};

struct LoadedTasks {
  std::vector<TaskRecord> tasks;
  std::vector<std::string> warnings;
};

/// Line-delimited task records; blank lines are skipped.
/// ParseError carries the 1-based line number, DuplicateId the line of the second occurrence.
LoadedTasks load_tasks(const std::filesystem::path& path, const LoadOptions& options = {});
LoadedTasks parse_tasks(std::istream& in, const LoadOptions& options = {});
void save_tasks(const std::vector<TaskRecord>& tasks, const std::filesystem::path& path);
void write_tasks(const std::vector<TaskRecord>& tasks, std::ostream& out);

// Embedding files.
//
// text:   one {"id": ..., "vector": [...], "payload": ...} object per line ("payload" optional)
// binary: "ECPEMB1\n", dim (u64 LE), count (u64 LE), then per row a u16 LE id length,
//         the id bytes and dim little-endian float32 values
//
// Values are stored as float32 in both encodings, so both load to the same pool.

inline constexpr std::string_view kEmbeddingMagic = "ECPEMB1\n";

enum class EmbeddingEncoding { text, binary };

/// Detects the encoding from the magic bytes. Errors are FormatError with a byte offset.
DemoPool load_embeddings(const std::filesystem::path& path);
DemoPool parse_embeddings_binary(std::string_view bytes);
DemoPool parse_embeddings_text(std::string_view text);
void save_embeddings(const DemoPool& pool, const std::filesystem::path& path, EmbeddingEncoding encoding);
std::string encode_embeddings(const DemoPool& pool, EmbeddingEncoding encoding);

// Fitted parameter file: a JSON object with keys r0, emf_model, lambda, domain_constants,
// calib {a, b}, gauge_model and optionally direct_answer.

FitParams load_params(const std::filesystem::path& path);
FitParams parse_params(std::string_view text);
void save_params(const FitParams& params, const std::filesystem::path& path);
std::string encode_params(const FitParams& params);

/// Strategy encoding shared by task runs and strategy files: a bare tag for the
/// parameter-free strategies, otherwise an object {"tag": ..., ...}.
StrategyKind parse_strategy(std::string_view json_text);
std::string encode_strategy(const StrategyKind& kind);

/// Input of the `simulate` subcommand.
struct SimulationConfig {
  StrategySpec spec;
  double emf_model = 1.0;
  double e_itl = 0.0;
  double r0 = 1.0;
  EffectiveSampleRule rule = EffectiveSampleRule::independent;
};

/// {"strategy": ..., "base": {plan, operation, domain, calculate}, "emf_model": .., "e_itl": .., "r0": .., "rule": ..}
SimulationConfig load_strategy_file(const std::filesystem::path& path);
SimulationConfig parse_strategy_config(std::string_view text);

struct StepAnnotation {
  std::size_t plan_steps = 0;
  std::size_t local_ops = 0;

  friend bool operator==(const StepAnnotation&, const StepAnnotation&) = default;
};

/// Heuristic step counts for a rationale.
///
/// plan_steps = max(#"Step <digits>:" markers (any case), #"\n\n" separators)
/// local_ops  = #{',' ';' '.'} followed by whitespace or end of text
///            + #lines starting with "- " or "• "
StepAnnotation annotate_steps(std::string_view rationale);

struct ReportRow {
  double power_mid = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
  std::string model;
  std::string strategy;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

enum class ReportFormat { csv, svg_scatter };

ReportFormat parse_report_format(std::string_view text);

struct SvgOptions {
  bool fitted_line = false;
  std::string title;
};

/// Writes rows as csv (header power_mid,accuracy,count,model,strategy) or as an SVG scatter.
void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path, ReportFormat format,
                  const SvgOptions& svg = {});
void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);
void write_report_svg(const std::vector<ReportRow>& rows, std::ostream& out, const SvgOptions& svg = {});
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);
std::vector<ReportRow> parse_report_csv(std::istream& in);

/// RFC 4180 field quoting.
std::string csv_field(std::string_view value);
/// Splits one csv record; `line` must not contain unquoted line breaks.
std::vector<std::string> split_csv_record(std::string_view line);

/// Shortest round-trip text for a double.
std::string format_number(double value);

std::string read_file(const std::filesystem::path& path);

}  // namespace ecp::io
