//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/acquisition.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace molbbo {

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(const Prediction &p, double f_max, double xi) {
  if (!(xi >= 0.0))
    throw std::invalid_argument("expected_improvement: xi must be >= 0");
  const double delta = p.mean - f_max - xi;
  if (!(p.stddev > 0.0))
    return std::max(delta, 0.0);
  const double z = delta / p.stddev;
  const double ei = delta * normal_cdf(z) + p.stddev * normal_pdf(z);
  return std::max(ei, 0.0);
}

} // namespace molbbo
