#pragma once

#include <map>
#include <string>
#include <string_view>

namespace ecp {

/// Resistance multipliers applied when a model answers without a written rationale.
struct DirectAnswerMultipliers {
  double plan = 1.1;
  double operation = 1.6;
  double domain = 1.0;
  double calculate = 1.5;

  friend bool operator==(const DirectAnswerMultipliers&, const DirectAnswerMultipliers&) = default;
};

struct Calibration {
  double a = 1.0;
  double b = 0.0;

  /// clamp(a * power + b, 0, 1)
  double accuracy(double power) const;

  friend bool operator==(const Calibration&, const Calibration&) = default;
};

/// Fitted constants shared by prediction, validation and simulation.
struct FitParams {
  std::map<std::string, double> emf_model;
  std::map<std::string, double> lambda;  // keyed by representation label
  double r0 = 1.0;
  std::map<std::string, double> domain_constants;  // keyed by task family
  Calibration calib;
  std::string gauge_model;
  DirectAnswerMultipliers direct_answer;

  /// Throws MissingParam when `model` has no fitted EMF.
  double emf(std::string_view model) const;
  /// Throws MissingParam when `representation` has no fitted lambda.
  double lambda_for(std::string_view representation) const;

  /// Checks r0 > 0, lambda > 0, emf >= 0 and emf[gauge] == 1 when a gauge model is set.
  void validate() const;

  friend bool operator==(const FitParams&, const FitParams&) = default;
};

}  // namespace ecp
