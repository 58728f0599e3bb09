#pragma once

#include <span>
#include <utility>
#include <vector>

namespace ecp::stats {

/// Paired observations, e.g. (power, accuracy).
struct PairedSample {
  std::vector<double> xs;
  std::vector<double> ys;

  /// Throws InvalidInput unless lengths match, n >= 2 and all values are finite.
  void validate() const;
};

/// Product-moment correlation. DegenerateInput when either variance is zero.
double pearson(std::span<const double> xs, std::span<const double> ys);
double pearson(const PairedSample& s);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);
double spearman(const PairedSample& s);

/// Coefficient of determination of the least-squares line of ys on xs; 0 when ys is constant.
double r_squared(std::span<const double> xs, std::span<const double> ys);
double r_squared(const PairedSample& s);

/// 1-based ranks, ties share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of ys on xs. DegenerateInput when xs has zero variance.
LinearFit least_squares(std::span<const double> xs, std::span<const double> ys);

/// Right-continuous step function sampled at the sorted unique input values.
struct StepFunction {
  std::vector<double> xs;
  std::vector<double> ys;
  /// Value below the first knot.
  double left = 0.0;

  double operator()(double x) const;
};

StepFunction ecdf(std::span<const double> values);
/// 1 - ecdf
StepFunction eccdf(std::span<const double> values);

struct Ellipse {
  std::pair<double, double> center;
  std::pair<double, double> semi_axes;  // major, minor
  double angle = 0.0;                   // radians, major axis against the x axis, in (-pi/2, pi/2]
};

/// Confidence ellipse of a 2-D sample at `level` (0.95 uses the chi-square quantile 5.991).
Ellipse confidence_ellipse(std::span<const std::pair<double, double>> points, double level = 0.95);

}  // namespace ecp::stats
