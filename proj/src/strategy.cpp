#include "ecp/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ecp/error.hpp"

namespace ecp {

namespace {

// Beyond this many identical branches a group is stored as one branch with a scaled
// conductance; the reduction is the same.
constexpr std::uint64_t kExplicitBranchLimit = 4096;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }
bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

void check_r0(double r0) {
  if (!finite_positive(r0)) fail(ErrorKind::InvalidInput, "r0 must be > 0");
}

void check_count(std::uint64_t n, const char* name) {
  if (n == 0) fail(ErrorKind::InvalidInput, std::string(name) + " must be >= 1");
}

/// Series chain of the non-zero components of a breakdown.
std::vector<Resistor> chain_of(const ResistanceBreakdown& b, bool with_plan = true, bool with_calculate = true) {
  std::vector<Resistor> chain;
  const auto push = [&](ResistorKind kind, double v) {
    if (v > 0.0) chain.push_back({kind, v});
  };
  if (with_plan) push(ResistorKind::plan, b.plan);
  push(ResistorKind::operation, b.operation);
  push(ResistorKind::domain, b.domain);
  if (with_calculate) push(ResistorKind::calculate, b.calculate);
  return chain;
}

ParallelGroup identical_group(const std::vector<Resistor>& branch, std::uint64_t n, double n_eff,
                              std::optional<Resistor> aggregation) {
  ParallelGroup group;
  group.aggregation = aggregation;
  if (n <= kExplicitBranchLimit) {
    group.branches.assign(n, branch);
    group.conductance_scale = n_eff / static_cast<double>(n);
  } else {
    group.branches.push_back(branch);
    group.conductance_scale = n_eff;
  }
  return group;
}

ParallelGroup sampled_group(const ResistanceBreakdown& base, std::uint64_t n,
                            const std::vector<ResistanceBreakdown>& branches, double n_eff,
                            std::optional<Resistor> aggregation) {
  if (branches.empty()) return identical_group(chain_of(base), n, n_eff, aggregation);
  ParallelGroup group;
  group.aggregation = aggregation;
  for (const auto& b : branches) group.branches.push_back(chain_of(b));
  group.conductance_scale = n_eff / static_cast<double>(n);
  return group;
}

void append_series(CircuitNetwork& net, const std::vector<Resistor>& chain) {
  for (const auto& r : chain) net.elements.emplace_back(r);
}

void validate_branches(const std::vector<ResistanceBreakdown>& branches, std::uint64_t n) {
  if (branches.empty()) return;
  if (branches.size() != n) fail(ErrorKind::InvalidInput, "branch list length must equal n");
  for (const auto& b : branches) b.validate();
}

}  // namespace

std::string_view strategy_tag(const StrategyKind& kind) noexcept {
  return std::visit(overloaded{
                        [](const ZeroShot&) { return std::string_view("zero_shot"); },
                        [](const DirectAnswer&) { return std::string_view("direct_answer"); },
                        [](const ToolUsage&) { return std::string_view("tool_usage"); },
                        [](const ProgramOfThought&) { return std::string_view("program_of_thought"); },
                        [](const SelfConsistency&) { return std::string_view("self_consistency"); },
                        [](const Coverage&) { return std::string_view("coverage"); },
                        [](const FineGrainedSC&) { return std::string_view("fine_grained_sc"); },
                        [](const ChainOfVerification&) { return std::string_view("chain_of_verification"); },
                    },
                    kind);
}

std::string_view StrategySpec::tag() const noexcept { return strategy_tag(kind); }

void StrategySpec::validate() const {
  base.validate();
  std::visit(overloaded{
                 [](const ZeroShot&) {},
                 [](const ToolUsage&) {},
                 [](const ProgramOfThought&) {},
                 [](const DirectAnswer& s) {
                   const auto m = s.multipliers.value_or(DirectAnswerMultipliers{});
                   if (!(std::isfinite(m.plan) && m.plan >= 1.0 && std::isfinite(m.operation) &&
                         m.operation >= 1.0 && std::isfinite(m.calculate) && m.calculate >= 1.0)) {
                     fail(ErrorKind::InvalidInput, "direct-answer multipliers must be >= 1");
                   }
                   if (!finite_positive(m.domain)) {
                     fail(ErrorKind::InvalidInput, "direct-answer domain multiplier must be > 0");
                   }
                 },
                 [](const SelfConsistency& s) {
                   check_count(s.n, "n");
                   if (!finite_non_negative(s.r_s)) fail(ErrorKind::InvalidInput, "r_s must be >= 0");
                   validate_branches(s.branches, s.n);
                 },
                 [](const Coverage& s) {
                   check_count(s.n, "n");
                   validate_branches(s.branches, s.n);
                 },
                 [this](const FineGrainedSC& s) {
                   check_count(s.n, "n");
                   if (s.step_resistances.empty() || s.step_resistances.size() != s.step_verifications.size()) {
                     fail(ErrorKind::InvalidInput, "fine-grained step lists must be non-empty and of equal length");
                   }
                   for (double r : s.step_resistances) {
                     if (!finite_positive(r)) fail(ErrorKind::InvalidInput, "step resistance must be > 0");
                   }
                   for (double v : s.step_verifications) {
                     if (!finite_non_negative(v)) fail(ErrorKind::InvalidInput, "step verification must be >= 0");
                   }
                   const double steps = std::accumulate(s.step_resistances.begin(), s.step_resistances.end(), 0.0);
                   const double total = total_resistance(base);
                   if (std::abs(steps - total) > 1e-9 * std::max(1.0, total)) {
                     fail(ErrorKind::InvalidInput, "step resistances must sum to the base total");
                   }
                 },
                 [this](const ChainOfVerification& s) {
                   check_count(s.n, "n");
                   check_count(s.k, "k");
                   if (!finite_positive(s.r_s) || !finite_positive(s.r_meta)) {
                     fail(ErrorKind::InvalidInput, "chain-of-verification r_s and r_meta must be > 0");
                   }
                   if (!(total_resistance(base) > 0.0)) {
                     fail(ErrorKind::InvalidInput, "chain-of-verification needs a positive reasoning resistance");
                   }
                 },
             },
             kind);
}

std::string_view to_string(EffectiveSampleRule rule) noexcept {
  return rule == EffectiveSampleRule::independent ? "independent" : "log_corrected";
}

EffectiveSampleRule parse_sample_rule(std::string_view text) {
  if (text == "independent") return EffectiveSampleRule::independent;
  if (text == "log_corrected" || text == "log") return EffectiveSampleRule::log_corrected;
  fail(ErrorKind::InvalidInput, "unknown sample rule '" + std::string(text) + "'");
}

double effective_samples(std::uint64_t n, EffectiveSampleRule rule) {
  check_count(n, "n");
  if (rule == EffectiveSampleRule::independent) return static_cast<double>(n);
  return std::max(1.0, std::log(static_cast<double>(n)));
}

CircuitNetwork apply_strategy(const StrategySpec& spec, const CompileOptions& options) {
  spec.validate();
  check_r0(options.r0);

  CircuitNetwork net;
  net.emfs = options.emfs;
  const auto& base = spec.base;
  const auto rule = options.rule;

  std::visit(
      overloaded{
          [&](const ZeroShot&) { append_series(net, chain_of(base)); },
          [&](const DirectAnswer& s) {
            const auto m = s.multipliers.value_or(DirectAnswerMultipliers{});
            ResistanceBreakdown scaled{base.plan * m.plan, base.operation * m.operation, base.domain * m.domain,
                                       base.calculate * m.calculate};
            append_series(net, chain_of(scaled));
          },
          [&](const ToolUsage&) { append_series(net, chain_of(base, true, false)); },
          [&](const ProgramOfThought&) { append_series(net, chain_of(base, false, false)); },
          [&](const SelfConsistency& s) {
            std::optional<Resistor> aggregation;
            if (s.r_s > 0.0) aggregation = Resistor{ResistorKind::verification, s.r_s};
            net.elements.emplace_back(sampled_group(base, s.n, s.branches, effective_samples(s.n, rule), aggregation));
          },
          [&](const Coverage& s) {
            net.elements.emplace_back(sampled_group(base, s.n, s.branches, effective_samples(s.n, rule), std::nullopt));
          },
          [&](const FineGrainedSC& s) {
            const double n_eff = effective_samples(s.n, rule);
            for (std::size_t j = 0; j < s.step_resistances.size(); ++j) {
              std::optional<Resistor> verification;
              if (s.step_verifications[j] > 0.0) {
                verification = Resistor{ResistorKind::verification, s.step_verifications[j]};
              }
              net.elements.emplace_back(identical_group({Resistor{ResistorKind::generic, s.step_resistances[j]}}, s.n,
                                                        n_eff, verification));
            }
          },
          [&](const ChainOfVerification& s) {
            const double n_eff = effective_samples(s.n, rule);
            // Reasoning samples, then n*k verifier checks in parallel, then k meta checks in series.
            net.elements.emplace_back(identical_group(chain_of(base), s.n, n_eff, std::nullopt));
            const std::uint64_t checks = s.n * s.k;
            net.elements.emplace_back(identical_group({Resistor{ResistorKind::verification, s.r_s}}, checks,
                                                      n_eff * static_cast<double>(s.k), std::nullopt));
            if (s.k <= kExplicitBranchLimit) {
              for (std::uint64_t j = 0; j < s.k; ++j) net.elements.emplace_back(Resistor{ResistorKind::meta, s.r_meta});
            } else {
              net.elements.emplace_back(Resistor{ResistorKind::meta, static_cast<double>(s.k) * s.r_meta});
            }
          },
      },
      spec.kind);

  net.elements.emplace_back(Resistor{ResistorKind::output, options.r0});
  return net;
}

double sc_total_resistance(std::uint64_t n, std::span<const double> r_itr, double r_s, double r0) {
  check_count(n, "n");
  if (r_itr.size() != n) fail(ErrorKind::InvalidInput, "branch list length must equal n");
  if (!finite_non_negative(r_s)) fail(ErrorKind::InvalidInput, "r_s must be >= 0");
  check_r0(r0);
  return r0 + r_s + parallel(r_itr);
}

double sc_total_resistance(std::uint64_t n, double r_itr, double r_s, double r0) {
  check_count(n, "n");
  if (!finite_positive(r_itr)) fail(ErrorKind::InvalidInput, "r_itr must be > 0");
  if (!finite_non_negative(r_s)) fail(ErrorKind::InvalidInput, "r_s must be >= 0");
  check_r0(r0);
  return r0 + r_s + r_itr / static_cast<double>(n);
}

double coverage_total_resistance(std::uint64_t n, std::span<const double> r_itr, double r0) {
  return sc_total_resistance(n, r_itr, 0.0, r0);
}

double coverage_total_resistance(std::uint64_t n, double r_itr, double r0) {
  return sc_total_resistance(n, r_itr, 0.0, r0);
}

double fine_grained_total_resistance(std::uint64_t n, std::span<const double> step_r,
                                     std::span<const double> step_s, double r0) {
  check_count(n, "n");
  if (step_r.size() != step_s.size() || step_r.empty()) {
    fail(ErrorKind::InvalidInput, "step lists must be non-empty and of equal length");
  }
  check_r0(r0);
  double total = r0;
  for (std::size_t j = 0; j < step_r.size(); ++j) {
    if (!finite_positive(step_r[j])) fail(ErrorKind::InvalidInput, "step resistance must be > 0");
    if (!finite_non_negative(step_s[j])) fail(ErrorKind::InvalidInput, "step verification must be >= 0");
    total += step_s[j] + step_r[j] / static_cast<double>(n);
  }
  return total;
}

double fine_grained_total_resistance(std::span<const std::vector<double>> step_branches,
                                     std::span<const double> step_s, double r0) {
  if (step_branches.size() != step_s.size() || step_branches.empty()) {
    fail(ErrorKind::InvalidInput, "step lists must be non-empty and of equal length");
  }
  check_r0(r0);
  double total = r0;
  for (std::size_t j = 0; j < step_branches.size(); ++j) {
    if (!finite_non_negative(step_s[j])) fail(ErrorKind::InvalidInput, "step verification must be >= 0");
    total += step_s[j] + parallel(step_branches[j]);
  }
  return total;
}

double cov_total_resistance(std::uint64_t n, std::uint64_t k, double r_s, double r_meta, double r_itr,
                            double r0) {
  check_count(n, "n");
  check_count(k, "k");
  if (!finite_positive(r_s) || !finite_positive(r_meta) || !finite_positive(r_itr)) {
    fail(ErrorKind::InvalidInput, "chain-of-verification resistances must be > 0");
  }
  check_r0(r0);
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  return r0 + r_s / (nd * kd) + kd * r_meta + r_itr / nd;
}

double strategy_resistance(const StrategySpec& spec, double r0, EffectiveSampleRule rule) {
  return reduce_network(apply_strategy(spec, {r0, rule, {}})).total_resistance();
}

double strategy_power(const StrategySpec& spec, double e_model, double e_itl, double r0,
                      EffectiveSampleRule rule) {
  CompileOptions options{r0, rule, {{EmfKind::model, "model", e_model}, {EmfKind::itl, "itl", e_itl}}};
  return network_power(reduce_network(apply_strategy(spec, options)));
}

double strategy_power(const StrategySpec& spec, const FitParams& params, std::string_view model, double e_itl,
                      EffectiveSampleRule rule) {
  return strategy_power(spec, params.emf(model), e_itl, params.r0, rule);
}

ComponentGain component_gain(double r1, double r2, double k, double e_total, double r0) {
  if (!finite_positive(r1) || !finite_positive(r2)) fail(ErrorKind::InvalidInput, "r1 and r2 must be > 0");
  if (!(std::isfinite(k) && k > 1.0)) fail(ErrorKind::InvalidInput, "k must be > 1");
  check_r0(r0);
  const auto power = [&](double r) { return circuit_power(e_total, 0.0, r, r0); };
  const double before = power(r1 + r2);
  return {power(r1 / k + r2) - before, power(r1 + r2 / k) - before};
}

}  // namespace ecp
