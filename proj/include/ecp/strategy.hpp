#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "ecp/circuit.hpp"
#include "ecp/params.hpp"

namespace ecp {

struct ZeroShot {};

/// Answer without a rationale: every reasoning resistor is scaled up.
/// Unset multipliers mean "use the fitted ones" (or the defaults when compiled directly).
struct DirectAnswer {
  std::optional<DirectAnswerMultipliers> multipliers;
};

/// Calculation offloaded to a tool; the calculate resistor is dropped.
struct ToolUsage {};

/// Program-of-thought; both calculate and plan resistors are dropped.
struct ProgramOfThought {};

/// n sampled chains in parallel, merged through a voting resistor r_s.
/// `branches`, when given, replaces the n identical copies of the base breakdown.
struct SelfConsistency {
  std::uint64_t n = 1;
  double r_s = 0.0;
  std::vector<ResistanceBreakdown> branches;
};

/// pass@n: self-consistency without an aggregation resistor.
struct Coverage {
  std::uint64_t n = 1;
  std::vector<ResistanceBreakdown> branches;
};

/// Per-step voting. Step resistances partition the base total.
struct FineGrainedSC {
  std::uint64_t n = 1;
  std::vector<double> step_resistances;
  std::vector<double> step_verifications;
};

/// Chain-of-verification with k verifiers over n samples and a meta-verifier per round.
struct ChainOfVerification {
  std::uint64_t n = 1;
  std::uint64_t k = 1;
  double r_s = 0.0;
  double r_meta = 0.0;
};

using StrategyKind = std::variant<ZeroShot, DirectAnswer, ToolUsage, ProgramOfThought, SelfConsistency,
                                  Coverage, FineGrainedSC, ChainOfVerification>;

struct StrategySpec {
  ResistanceBreakdown base;
  StrategyKind kind;

  std::string_view tag() const noexcept;
  /// Throws InvalidInput on any invariant violation.
  void validate() const;
};

/// Tags: zero_shot, direct_answer, tool_usage, program_of_thought, self_consistency,
/// coverage, fine_grained_sc, chain_of_verification.
std::string_view strategy_tag(const StrategyKind& kind) noexcept;

enum class EffectiveSampleRule { independent, log_corrected };

std::string_view to_string(EffectiveSampleRule rule) noexcept;
EffectiveSampleRule parse_sample_rule(std::string_view text);

/// independent: n. log_corrected: max(1, ln n).
double effective_samples(std::uint64_t n, EffectiveSampleRule rule);

struct CompileOptions {
  double r0 = 1.0;
  EffectiveSampleRule rule = EffectiveSampleRule::independent;
  std::vector<EmfSource> emfs;
};

/// Builds the circuit for a strategy. Zero-resistance components are omitted, never
/// inserted as zero-valued resistors.
CircuitNetwork apply_strategy(const StrategySpec& spec, const CompileOptions& options = {});

// Closed forms. All returned resistances include the output load r0.

double sc_total_resistance(std::uint64_t n, std::span<const double> r_itr, double r_s, double r0);
double sc_total_resistance(std::uint64_t n, double r_itr, double r_s, double r0);

double coverage_total_resistance(std::uint64_t n, std::span<const double> r_itr, double r0);
double coverage_total_resistance(std::uint64_t n, double r_itr, double r0);

/// r0 + sum(step_s) + sum_j(step_r[j] / n)
double fine_grained_total_resistance(std::uint64_t n, std::span<const double> step_r,
                                     std::span<const double> step_s, double r0);
/// General form: every step has its own branch list.
double fine_grained_total_resistance(std::span<const std::vector<double>> step_branches,
                                     std::span<const double> step_s, double r0);

/// r0 + r_s / (n k) + k r_meta + r_itr / n
double cov_total_resistance(std::uint64_t n, std::uint64_t k, double r_s, double r_meta, double r_itr,
                            double r0);

/// Output power of the strategy circuit, parallel branch counts replaced by effective samples.
double strategy_power(const StrategySpec& spec, double e_model, double e_itl, double r0,
                      EffectiveSampleRule rule);

/// Same, with e_model and r0 looked up in fitted parameters (MissingParam when absent).
double strategy_power(const StrategySpec& spec, const FitParams& params, std::string_view model,
                      double e_itl, EffectiveSampleRule rule);

/// Total resistance (load included) the strategy presents under `rule`.
double strategy_resistance(const StrategySpec& spec, double r0, EffectiveSampleRule rule);

struct ComponentGain {
  double delta_p1 = 0.0;
  double delta_p2 = 0.0;
};

/// Power gained by dividing r1 (resp. r2) by k while the other component stays put.
ComponentGain component_gain(double r1, double r2, double k, double e_total, double r0);

}  // namespace ecp
