#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecp/dataset.hpp"
#include "ecp/params.hpp"
#include "ecp/semantic_field.hpp"
#include "ecp/strategy.hpp"

namespace ecp {

struct BinSpec {
  double width = 1.0;
  std::size_t min_count = 10;
};

struct PowerBin {
  double power_mid = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct Outcome {
  double power = 0.0;
  bool correct = false;
};

struct Binning {
  std::vector<PowerBin> bins;
  std::size_t dropped = 0;  // outcomes that fell into bins below min_count
};

/// Groups outcomes into half-open intervals [i w, (i+1) w) and keeps bins with at least
/// min_count members, sorted by power. Empty input or a negative power is InvalidInput.
std::vector<PowerBin> bin_by_power(std::span<const Outcome> outcomes, const BinSpec& spec);
Binning bin_by_power_detailed(std::span<const Outcome> outcomes, const BinSpec& spec);

/// How run powers are evaluated from a dataset.
struct PowerContext {
  const DemoPool* embeddings = nullptr;  // needed when runs carry demonstrations
  FieldMetric metric = FieldMetric::projection;
  EffectiveSampleRule rule = EffectiveSampleRule::independent;
};

/// Strategy spec for a task: fitted domain constant substituted for the task family and
/// fitted direct-answer multipliers filled in when the strategy leaves them unset.
StrategySpec resolve_strategy(const TaskRecord& task, const StrategyKind& strategy, const FitParams& params);

/// In-context EMF of a run: lambda[representation] * field(query, demos); 0 without demos.
double run_itl_emf(const TaskRecord& task, std::string_view representation, std::span<const std::string> demo_ids,
                   const FitParams& params, const PowerContext& context);

double run_power(const TaskRecord& task, const RunRecord& run, const FitParams& params,
                 const PowerContext& context);

/// Power and correctness of every run, in task then run order.
std::vector<Outcome> dataset_outcomes(std::span<const TaskRecord> tasks, const FitParams& params,
                                      const PowerContext& context);

struct DemoSelection {
  std::string representation;
  FieldMetric metric = FieldMetric::projection;
  std::vector<std::string> demo_ids;
  const DemoPool* pool = nullptr;
};

struct Prediction {
  double power = 0.0;
  double accuracy = 0.0;
};

/// MissingEmbedding when demonstrations are given but the task or a demo has no vector.
Prediction predict(const TaskRecord& task, std::string_view model, const FitParams& params,
                   const DemoSelection* demos, const StrategyKind& strategy, EffectiveSampleRule rule);

struct CorrelationSummary {
  std::size_t bins = 0;
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::optional<double> r_squared;
};

/// Correlations between bin power and bin accuracy; entries stay empty when undefined.
CorrelationSummary summarize_bins(std::span<const PowerBin> bins);

struct FitOptions {
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string gauge_model;  // defaults to the alphabetically first model
  PowerContext context;
  BinSpec bins;
  bool fit_domain_constants = false;
  int max_sweeps = 100;
  double tolerance = 1e-6;
};

struct FitReport {
  FitParams params;
  bool converged = false;
  int sweeps = 0;
  double objective = 0.0;  // 1 - r^2 of the per-run linear calibration on the validation split
  std::size_t validation_runs = 0;
  std::size_t held_out_runs = 0;
  CorrelationSummary validation;
  CorrelationSummary held_out;
};

/// Fits the free constants on a seeded validation split.
///
/// Scalars are searched in log space on [1e-2, 1e2]: a 25-point grid per coordinate,
/// golden-section refinement around the best grid cell, then a Newton polish with
/// central differences. The objective is the squared error of the per-run least-squares
/// line of correctness on power, which is smooth in the parameters. The gauge model's
/// EMF stays fixed at 1. Finally the calibration line is refit on the validation bins.
///
/// DegenerateFit when the validation split is empty, the labels or powers are constant,
/// or fewer than two validation bins survive.
FitReport fit(std::span<const TaskRecord> tasks, const FitOptions& options);

/// Grid search over [1, 3] (step 0.05) for the plan, operation and calculate multipliers,
/// maximising the Spearman correlation of bin power against bin accuracy on the validation
/// split. Ties go to the smallest multipliers.
DirectAnswerMultipliers fit_direct_answer_multipliers(std::span<const TaskRecord> tasks, const FitParams& params,
                                                      const FitOptions& options);

/// Seeded split of flattened run indices; the first `count` of the permutation.
std::vector<std::size_t> validation_indices(std::size_t total_runs, double fraction, std::uint64_t seed);

}  // namespace ecp
