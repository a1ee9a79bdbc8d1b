//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_ACQUISITION_H_
#define MOLBBO_ACQUISITION_H_

#include "molbbo/gp.h"

namespace molbbo {

double normal_pdf(double z);
double normal_cdf(double z);

/// E[max(Y - f_max - xi, 0)] for Y ~ N(mean, stddev^2), maximization.
/// Throws std::invalid_argument when xi < 0.
double expected_improvement(const Prediction &p, double f_max, double xi);

} // namespace molbbo

#endif // MOLBBO_ACQUISITION_H_
