#include "ecp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ecp/error.hpp"

namespace ecp::stats {

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) fail(ErrorKind::InvalidInput, "paired sample lengths differ");
  if (xs.size() < 2) fail(ErrorKind::InvalidInput, "paired sample needs at least 2 points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) fail(ErrorKind::InvalidInput, "non-finite sample value");
  }
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

struct Moments {
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  double mx = 0.0;
  double my = 0.0;
};

Moments centered_moments(std::span<const double> xs, std::span<const double> ys) {
  Moments m;
  m.mx = mean(xs);
  m.my = mean(ys);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - m.mx;
    const double dy = ys[i] - m.my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace

void PairedSample::validate() const { check_pair(xs, ys); }

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const auto m = centered_moments(xs, ys);
  if (!(m.sxx > 0.0) || !(m.syy > 0.0)) fail(ErrorKind::DegenerateInput, "pearson: zero variance");
  return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

double pearson(const PairedSample& s) { return pearson(s.xs, s.ys); }

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 hold 1-based ranks i+1..j.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double spearman(const PairedSample& s) { return spearman(s.xs, s.ys); }

LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const auto m = centered_moments(xs, ys);
  if (!(m.sxx > 0.0)) fail(ErrorKind::DegenerateInput, "least squares: zero variance in x");
  const double slope = m.sxy / m.sxx;
  return {slope, m.my - slope * m.mx};
}

double r_squared(std::span<const double> xs, std::span<const double> ys) {
  const auto fit = least_squares(xs, ys);
  const double my = mean(ys);
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double residual = ys[i] - (fit.slope * xs[i] + fit.intercept);
    sse += residual * residual;
    sst += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sst > 0.0)) return 0.0;
  return 1.0 - sse / sst;
}

double r_squared(const PairedSample& s) { return r_squared(s.xs, s.ys); }

double StepFunction::operator()(double x) const {
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return left;
  return ys[static_cast<std::size_t>(it - xs.begin()) - 1];
}

StepFunction ecdf(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "ecdf of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  StepFunction f;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    f.xs.push_back(sorted[i]);
    f.ys.push_back(static_cast<double>(i + 1) / n);
  }
  return f;
}

StepFunction eccdf(std::span<const double> values) {
  auto f = ecdf(values);
  for (double& y : f.ys) y = 1.0 - y;
  f.left = 1.0;
  return f;
}

Ellipse confidence_ellipse(std::span<const std::pair<double, double>> points, double level) {
  if (points.size() < 3) fail(ErrorKind::DegenerateInput, "confidence ellipse needs at least 3 points");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidInput, "confidence level must be in (0, 1)");

  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  const double n = static_cast<double>(points.size());
  mx /= n;
  my /= n;
  double cxx = 0.0;
  double cyy = 0.0;
  double cxy = 0.0;
  for (const auto& [x, y] : points) {
    cxx += (x - mx) * (x - mx);
    cyy += (y - my) * (y - my);
    cxy += (x - mx) * (y - my);
  }
  cxx /= n - 1.0;
  cyy /= n - 1.0;
  cxy /= n - 1.0;

  // Eigenvalues of the symmetric 2x2 covariance.
  const double half_trace = 0.5 * (cxx + cyy);
  const double spread = std::hypot(0.5 * (cxx - cyy), cxy);
  const double major = half_trace + spread;
  const double minor = half_trace - spread;
  if (!(major > 0.0) || !(minor > 1e-12 * major)) {
    fail(ErrorKind::DegenerateInput, "confidence ellipse: covariance is singular (collinear points)");
  }

  // Chi-square with 2 degrees of freedom is exponential: quantile = -2 ln(1 - level).
  const double chi2 = -2.0 * std::log1p(-level);
  double angle = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
  if (angle <= -M_PI / 2.0) angle += M_PI;

  Ellipse e;
  e.center = {mx, my};
  e.semi_axes = {std::sqrt(chi2 * major), std::sqrt(chi2 * minor)};
  e.angle = angle;
  return e;
}

}  // namespace ecp::stats
