//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/nelder_mead.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace molbbo {

NelderMeadResult
nelder_mead_maximize(const std::function<double(const std::vector<double> &)>
                         &objective,
                     std::vector<double> start, const std::vector<double> &lower,
                     const std::vector<double> &upper,
                     const NelderMeadOptions &options) {
  const std::size_t dim = start.size();
  if (lower.size() != dim || upper.size() != dim)
    throw std::invalid_argument("nelder_mead: bound dimension mismatch");

  auto clamp = [&](std::vector<double> &x) {
    for (std::size_t i = 0; i < dim; ++i)
      x[i] = std::clamp(x[i], lower[i], upper[i]);
  };
  // Minimize the negated objective; NaN counts as worst.
  auto cost = [&](const std::vector<double> &x) {
    const double f = objective(x);
    return std::isnan(f) ? std::numeric_limits<double>::infinity() : -f;
  };

  clamp(start);
  if (dim == 0)
    return {start, -cost(start), 0};

  std::vector<std::vector<double>> simplex(dim + 1, start);
  for (std::size_t i = 0; i < dim; ++i) {
    const double width = upper[i] - lower[i];
    double step = std::min(options.initial_step, 0.25 * width);
    if (start[i] + step > upper[i])
      step = -step;
    simplex[i + 1][i] += step;
    clamp(simplex[i + 1]);
  }
  std::vector<double> costs(dim + 1);
  for (std::size_t i = 0; i <= dim; ++i)
    costs[i] = cost(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                     std::size_t b) {
      return costs[a] < costs[b];
    });
    const std::size_t best = order.front(), worst = order.back(),
                      second = order[dim - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= dim; ++i)
      for (std::size_t k = 0; k < dim; ++k)
        spread = std::max(spread, std::abs(simplex[i][k] - simplex[best][k]));
    if (std::isfinite(costs[worst]) &&
        std::abs(costs[worst] - costs[best]) < options.f_tolerance &&
        spread < options.x_tolerance)
      break;

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i <= dim; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < dim; ++k)
          centroid[k] += simplex[i][k] / static_cast<double>(dim);

    auto along = [&](double t) {
      std::vector<double> x(dim);
      for (std::size_t k = 0; k < dim; ++k)
        x[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
      clamp(x);
      return x;
    };

    std::vector<double> reflected = along(-1.0);
    const double c_ref = cost(reflected);
    if (c_ref < costs[best]) {
      std::vector<double> expanded = along(-2.0);
      const double c_exp = cost(expanded);
      if (c_exp < c_ref) {
        simplex[worst] = std::move(expanded);
        costs[worst] = c_exp;
      } else {
        simplex[worst] = std::move(reflected);
        costs[worst] = c_ref;
      }
      continue;
    }
    if (c_ref < costs[second]) {
      simplex[worst] = std::move(reflected);
      costs[worst] = c_ref;
      continue;
    }
    const bool outside = c_ref < costs[worst];
    std::vector<double> contracted = along(outside ? -0.5 : 0.5);
    const double c_con = cost(contracted);
    if (c_con < std::min(c_ref, costs[worst])) {
      simplex[worst] = std::move(contracted);
      costs[worst] = c_con;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best)
        continue;
      for (std::size_t k = 0; k < dim; ++k)
        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] -
                                                  simplex[best][k]);
      clamp(simplex[i]);
      costs[i] = cost(simplex[i]);
    }
  }

  const std::size_t best = static_cast<std::size_t>(
      std::min_element(costs.begin(), costs.end()) - costs.begin());
  return {simplex[best], -costs[best], iter};
}

} // namespace molbbo
