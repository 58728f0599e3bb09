#include "ecp/circuit.hpp"

#include <cmath>
#include <string>

#include "ecp/error.hpp"

namespace ecp {

namespace {

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

void check_resistor(const Resistor& r, std::string_view where) {
  if (!finite_non_negative(r.value)) {
    fail(ErrorKind::InvalidInput, std::string(where) + ": resistor value must be finite and >= 0, got " +
                                      std::to_string(r.value));
  }
}

void check_emf(const EmfSource& e) {
  if (!std::isfinite(e.value)) fail(ErrorKind::InvalidInput, "emf '" + e.label + "' is not finite");
  if (e.kind == EmfKind::model && e.value < 0.0) {
    fail(ErrorKind::InvalidInput, "model emf '" + e.label + "' must be >= 0");
  }
}

double reduce_group(const ParallelGroup& group) {
  if (group.branches.empty()) fail(ErrorKind::InvalidInput, "parallel group has no branches");
  if (!(std::isfinite(group.conductance_scale) && group.conductance_scale > 0.0)) {
    fail(ErrorKind::InvalidInput, "parallel group conductance scale must be > 0");
  }
  std::vector<double> branch_values;
  branch_values.reserve(group.branches.size());
  std::vector<double> chain;
  for (const auto& branch : group.branches) {
    if (branch.empty()) fail(ErrorKind::InvalidInput, "parallel group has an empty branch");
    chain.clear();
    for (const auto& r : branch) {
      check_resistor(r, "parallel branch");
      if (r.kind == ResistorKind::output) {
        fail(ErrorKind::InvalidInput, "output resistor inside a parallel group");
      }
      chain.push_back(r.value);
    }
    branch_values.push_back(series(chain));
  }
  double combined = parallel(branch_values) / group.conductance_scale;
  if (group.aggregation) {
    check_resistor(*group.aggregation, "aggregation");
    combined += group.aggregation->value;
  }
  return combined;
}

}  // namespace

std::string_view to_string(ResistorKind kind) noexcept {
  switch (kind) {
    case ResistorKind::plan: return "plan";
    case ResistorKind::operation: return "operation";
    case ResistorKind::domain: return "domain";
    case ResistorKind::calculate: return "calculate";
    case ResistorKind::output: return "output";
    case ResistorKind::verification: return "verification";
    case ResistorKind::meta: return "meta";
    case ResistorKind::generic: return "generic";
  }
  return "generic";
}

void ResistanceBreakdown::validate() const {
  const std::pair<const char*, double> parts[] = {
      {"plan", plan}, {"operation", operation}, {"domain", domain}, {"calculate", calculate}};
  for (const auto& [name, v] : parts) {
    if (!finite_non_negative(v)) {
      fail(ErrorKind::InvalidInput,
           std::string("resistance component '") + name + "' must be finite and >= 0");
    }
  }
}

double series(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "series of an empty list");
  double sum = 0.0;
  for (double v : values) {
    if (!finite_non_negative(v)) fail(ErrorKind::InvalidInput, "series value must be finite and >= 0");
    sum += v;
  }
  return sum;
}

double parallel(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "parallel of an empty list");
  double conductance = 0.0;
  for (double v : values) {
    // A zero branch would short the group; callers omit such resistors instead.
    if (!(std::isfinite(v) && v > 0.0)) fail(ErrorKind::InvalidInput, "parallel value must be finite and > 0");
    conductance += 1.0 / v;
  }
  return 1.0 / conductance;
}

double total_resistance(const ResistanceBreakdown& b) {
  b.validate();
  return b.plan + b.operation + b.domain + b.calculate;
}

double circuit_current(double e_model, double e_itl, double r_itr, double r0) {
  if (!(std::isfinite(r0) && r0 > 0.0)) fail(ErrorKind::InvalidInput, "r0 must be > 0");
  if (!finite_non_negative(r_itr)) fail(ErrorKind::InvalidInput, "r_itr must be finite and >= 0");
  if (!std::isfinite(e_model) || !std::isfinite(e_itl)) fail(ErrorKind::InvalidInput, "emf is not finite");
  return (e_model + e_itl) / (r_itr + r0);
}

double circuit_power(double e_model, double e_itl, double r_itr, double r0) {
  const double current = circuit_current(e_model, e_itl, r_itr, r0);
  return current * current * r0;
}

ReducedCircuit reduce_network(const CircuitNetwork& net) {
  ReducedCircuit out;
  bool has_output = false;
  for (const auto& e : net.emfs) {
    check_emf(e);
    out.total_emf += e.value;
  }
  for (const auto& element : net.elements) {
    if (const auto* r = std::get_if<Resistor>(&element)) {
      check_resistor(*r, "series element");
      if (r->kind == ResistorKind::output) {
        has_output = true;
        out.r0 += r->value;
      } else {
        out.equivalent_resistance += r->value;
      }
    } else {
      out.equivalent_resistance += reduce_group(std::get<ParallelGroup>(element));
    }
  }
  if (!has_output) fail(ErrorKind::InvalidInput, "network has no output resistor");
  return out;
}

double network_power(const ReducedCircuit& reduced) {
  return circuit_power(reduced.total_emf, 0.0, reduced.equivalent_resistance, reduced.r0);
}

}  // namespace ecp
