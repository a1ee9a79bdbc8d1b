//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_NELDER_MEAD_H_
#define MOLBBO_NELDER_MEAD_H_

#include <functional>
#include <vector>

namespace molbbo {

struct NelderMeadOptions {
  int max_iterations = 200;
  double initial_step = 1.0;
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value;
  int iterations;
};

/// Box-constrained Nelder-Mead maximization. Trial points are clamped into
/// [lower, upper]. The start point is a simplex vertex, so the returned
/// value is never below objective(start).
NelderMeadResult
nelder_mead_maximize(const std::function<double(const std::vector<double> &)>
                         &objective,
                     std::vector<double> start, const std::vector<double> &lower,
                     const std::vector<double> &upper,
                     const NelderMeadOptions &options = {});

} // namespace molbbo

#endif // MOLBBO_NELDER_MEAD_H_
