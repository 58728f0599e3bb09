#include "ecp/params.hpp"

#include <algorithm>
#include <cmath>

#include "ecp/error.hpp"

namespace ecp {

double Calibration::accuracy(double power) const { return std::clamp(a * power + b, 0.0, 1.0); }

double FitParams::emf(std::string_view model) const {
  const auto it = emf_model.find(std::string(model));
  if (it == emf_model.end()) fail(ErrorKind::MissingParam, "no fitted emf for model '" + std::string(model) + "'");
  return it->second;
}

double FitParams::lambda_for(std::string_view representation) const {
  const auto it = lambda.find(std::string(representation));
  if (it == lambda.end()) {
    fail(ErrorKind::MissingParam, "no fitted lambda for representation '" + std::string(representation) + "'");
  }
  return it->second;
}

void FitParams::validate() const {
  if (!(std::isfinite(r0) && r0 > 0.0)) fail(ErrorKind::InvalidInput, "r0 must be > 0");
  for (const auto& [model, e] : emf_model) {
    if (!(std::isfinite(e) && e >= 0.0)) fail(ErrorKind::InvalidInput, "emf for '" + model + "' must be >= 0");
  }
  for (const auto& [rep, l] : lambda) {
    if (!(std::isfinite(l) && l > 0.0)) fail(ErrorKind::InvalidInput, "lambda for '" + rep + "' must be > 0");
  }
  for (const auto& [family, d] : domain_constants) {
    if (!(std::isfinite(d) && d >= 0.0)) {
      fail(ErrorKind::InvalidInput, "domain constant for '" + family + "' must be >= 0");
    }
  }
  if (!gauge_model.empty()) {
    const auto it = emf_model.find(gauge_model);
    if (it == emf_model.end() || it->second != 1.0) {
      fail(ErrorKind::InvalidInput, "gauge model '" + gauge_model + "' must have emf exactly 1");
    }
  }
  if (!std::isfinite(calib.a) || !std::isfinite(calib.b)) fail(ErrorKind::InvalidInput, "calibration is not finite");
}

}  // namespace ecp
