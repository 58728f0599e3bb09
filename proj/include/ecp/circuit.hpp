#pragma once

#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ecp {

enum class ResistorKind { plan, operation, domain, calculate, output, verification, meta, generic };

std::string_view to_string(ResistorKind kind) noexcept;

struct Resistor {
  ResistorKind kind = ResistorKind::generic;
  double value = 0.0;
};

/// Per-task reasoning difficulty split into the four series components.
struct ResistanceBreakdown {
  double plan = 0.0;
  double operation = 0.0;
  double domain = 0.0;
  double calculate = 0.0;

  /// Throws InvalidInput unless every component is finite and non-negative.
  void validate() const;

  friend bool operator==(const ResistanceBreakdown&, const ResistanceBreakdown&) = default;
};

enum class EmfKind { model, itl };

/// Lumped EMF. Model EMFs must be non-negative; in-context (itl) EMFs may be negative.
struct EmfSource {
  EmfKind kind = EmfKind::model;
  std::string label;
  double value = 0.0;
};

/// Branches combined in parallel, followed in series by an optional aggregation resistor.
///
/// `conductance_scale` multiplies the summed branch conductance. It stays 1 for
/// independent samples and becomes n_eff / n when only n_eff of the n branches
/// are treated as distinct.
struct ParallelGroup {
  std::vector<std::vector<Resistor>> branches;
  std::optional<Resistor> aggregation;
  double conductance_scale = 1.0;
};

using CircuitElement = std::variant<Resistor, ParallelGroup>;

struct CircuitNetwork {
  std::vector<EmfSource> emfs;
  std::vector<CircuitElement> elements;
};

/// Result of reducing a network. `equivalent_resistance` excludes the output load.
struct ReducedCircuit {
  double equivalent_resistance = 0.0;
  double r0 = 0.0;
  double total_emf = 0.0;

  /// Equivalent resistance seen by the sources, load included.
  double total_resistance() const { return equivalent_resistance + r0; }
};

double series(std::span<const double> values);
double parallel(std::span<const double> values);

inline double series(std::initializer_list<double> values) {
  return series(std::span<const double>(values.begin(), values.size()));
}
inline double parallel(std::initializer_list<double> values) {
  return parallel(std::span<const double>(values.begin(), values.size()));
}

double total_resistance(const ResistanceBreakdown& b);

/// I = (e_model + e_itl) / (r_itr + r0)
double circuit_current(double e_model, double e_itl, double r_itr, double r0);

/// P = I^2 r0 = (e_model + e_itl)^2 r0 / (r_itr + r0)^2
double circuit_power(double e_model, double e_itl, double r_itr, double r0);

ReducedCircuit reduce_network(const CircuitNetwork& net);

/// Power dissipated in the output load of a reduced network.
double network_power(const ReducedCircuit& reduced);

}  // namespace ecp
