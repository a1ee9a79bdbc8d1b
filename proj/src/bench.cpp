//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/bench.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "molbbo/random.h"

namespace molbbo {

namespace {

// Grid targets are computed as lo + i*step; comparisons allow for the
// rounding in that product.
double reach_tolerance(double target) {
  return 1e-9 * std::max(1.0, std::abs(target));
}

double effort_of(const CallRecord &r, EffortAxis axis) {
  return axis == EffortAxis::Calls ? static_cast<double>(r.call_index)
                                   : r.cpu_time_s;
}

void require_same_objective(const std::vector<RunLog> &logs, bool allow_mixed) {
  if (logs.empty())
    throw std::invalid_argument("no run logs given");
  if (allow_mixed)
    return;
  for (const RunLog &l : logs)
    if (l.header.objective != logs.front().header.objective)
      throw MixedObjectivesError("run logs mix objectives '" +
                                 logs.front().header.objective + "' and '" +
                                 l.header.objective + "'");
}

} // namespace

void TargetGrid::validate() const {
  if (!(lo < hi))
    throw std::invalid_argument("target grid: lo must be below hi");
  if (!(step > 0))
    throw std::invalid_argument("target grid: step must be positive");
}

std::vector<double> TargetGrid::points() const {
  validate();
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    pts[static_cast<std::size_t>(i)] = lo + static_cast<double>(i) * step;
  return pts;
}

TargetGrid TargetGrid::parse(const std::string &text) {
  std::istringstream in(text);
  TargetGrid g;
  char c1 = 0, c2 = 0;
  if (!(in >> g.lo >> c1 >> g.hi >> c2 >> g.step) || c1 != ':' || c2 != ':' ||
      !(in >> std::ws).eof())
    throw std::invalid_argument("grid must look like lo:hi:step, got '" +
                                text + "'");
  g.validate();
  return g;
}

std::vector<CurvePoint> ecdf(const std::vector<RunLog> &logs,
                             const TargetGrid &grid, EffortAxis axis,
                             bool allow_mixed_objectives) {
  require_same_objective(logs, allow_mixed_objectives);
  const std::vector<double> targets = grid.points();
  auto reached = [&](std::optional<double> best) -> long {
    if (!best)
      return 0;
    const double b = *best + reach_tolerance(*best);
    return std::upper_bound(targets.begin(), targets.end(), b) -
           targets.begin();
  };

  std::vector<double> xs;
  for (const RunLog &l : logs)
    for (const CallRecord &r : l.records)
      xs.push_back(effort_of(r, axis));
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  // Sweep each run once over the sorted abscissae.
  std::vector<long> hits(xs.size(), 0);
  for (const RunLog &l : logs) {
    std::size_t k = 0;
    std::optional<double> best;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      while (k < l.records.size() && effort_of(l.records[k], axis) <= xs[i]) {
        if (l.records[k].best_so_far)
          best = best ? std::max(*best, *l.records[k].best_so_far)
                      : *l.records[k].best_so_far;
        ++k;
      }
      hits[i] += reached(best);
    }
  }
  const double denom =
      static_cast<double>(logs.size()) * static_cast<double>(targets.size());
  std::vector<CurvePoint> curve;
  curve.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    curve.push_back({xs[i], static_cast<double>(hits[i]) / denom});
  return curve;
}

std::optional<double> effort_to_target(const RunLog &log, double target,
                                       EffortAxis axis) {
  for (const CallRecord &r : log.records)
    if (r.best_so_far && *r.best_so_far + reach_tolerance(target) >= target)
      return effort_of(r, axis);
  return std::nullopt;
}

ErtResult ert(const std::vector<RunLog> &logs, double target, EffortAxis axis,
              bool allow_mixed_objectives) {
  require_same_objective(logs, allow_mixed_objectives);
  ErtResult res;
  res.runs = static_cast<int>(logs.size());
  double total = 0.0;
  for (const RunLog &l : logs) {
    if (auto e = effort_to_target(l, target, axis)) {
      total += *e;
      ++res.successes;
      res.success_efforts.push_back(*e);
    } else if (axis == EffortAxis::Calls && l.header.budget > 0) {
      total += static_cast<double>(l.header.budget);
    } else if (!l.records.empty()) {
      total += effort_of(l.records.back(), axis);
    }
  }
  std::sort(res.success_efforts.begin(), res.success_efforts.end());
  if (res.successes > 0)
    res.ert = total / res.successes;
  return res;
}

std::vector<LearningCurveRow>
learning_curve(const std::vector<LabeledMolecule> &dataset,
               const std::vector<int> &sizes, int folds, const KernelSpec &spec,
               std::uint64_t seed, const LearningCurveOptions &options) {
  spec.validate();
  if (folds < 2)
    throw std::invalid_argument("learning curve: folds must be >= 2");
  if (sizes.empty())
    throw std::invalid_argument("learning curve: no training sizes given");
  const int n = static_cast<int>(dataset.size());
  const int fold_size = n / folds;
  const int largest = *std::max_element(sizes.begin(), sizes.end());
  if (*std::min_element(sizes.begin(), sizes.end()) < 1)
    throw std::invalid_argument("learning curve: sizes must be >= 1");
  if (fold_size < 1 || n < largest + fold_size)
    throw std::invalid_argument(
        "learning curve: dataset of " + std::to_string(n) +
        " molecules is too small for training size " + std::to_string(largest) +
        " with " + std::to_string(folds) + " folds");

  ChemistryRules rules;
  rules.heavy_atom_limit = options.heavy_atom_limit;
  std::vector<MolecularGraph> graphs;
  graphs.reserve(dataset.size());
  for (const auto &m : dataset)
    graphs.push_back(parse_smiles(m.smiles, rules));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed(seed, {0}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  std::vector<LearningCurveRow> rows;
  for (int size : sizes)
    rows.push_back({size, 0.0, 0.0, {}});

  const double scale = feature_scale(spec.family, options.shingle_capacity);
  for (int f = 0; f < folds; ++f) {
    const auto test_begin = order.begin() + f * fold_size;
    const std::vector<int> test(test_begin, test_begin + fold_size);
    std::vector<int> pool(order.begin(), test_begin);
    pool.insert(pool.end(), test_begin + fold_size, order.end());

    for (std::size_t si = 0; si < sizes.size(); ++si) {
      const int size = sizes[si];
      std::vector<int> train = pool;
      std::mt19937_64 rng(derive_seed(seed, {1, static_cast<std::uint64_t>(f),
                                             static_cast<std::uint64_t>(size)}));
      std::shuffle(train.begin(), train.end(), rng);
      train.resize(static_cast<std::size_t>(size));

      ShingleDictionary dict(options.shingle_capacity);
      std::vector<ShingleVector> train_vecs;
      for (int i : train)
        train_vecs.push_back(encode(graphs[i], dict, false).vector);
      const int dim = dict.size();
      Eigen::MatrixXd X = Eigen::MatrixXd::Zero(size, dim);
      std::vector<double> y;
      for (int r = 0; r < size; ++r) {
        for (const auto &[col, cnt] : train_vecs[r].entries)
          X(r, col) = cnt * scale;
        y.push_back(dataset[train[r]].value);
      }
      FitOptions fo;
      fo.random_starts = options.gp_random_starts;
      fo.max_iterations = options.gp_max_iterations;
      fo.seed = derive_seed(seed, {2, static_cast<std::uint64_t>(f),
                                   static_cast<std::uint64_t>(size)});
      const GpModel model = GpModel::fit(X, y, spec, fo);

      double abs_err = 0.0;
      Eigen::VectorXd x(dim);
      for (int i : test) {
        x.setZero();
        for (const auto &[col, cnt] : encode_frozen(graphs[i], dict).vector.entries)
          x[col] = cnt * scale;
        abs_err += std::abs(model.predict(x).mean - dataset[i].value);
      }
      rows[si].fold_mae.push_back(abs_err / fold_size);
    }
  }

  for (auto &row : rows) {
    const double k = static_cast<double>(row.fold_mae.size());
    row.mae_mean =
        std::accumulate(row.fold_mae.begin(), row.fold_mae.end(), 0.0) / k;
    double ss = 0.0;
    for (double m : row.fold_mae)
      ss += (m - row.mae_mean) * (m - row.mae_mean);
    row.mae_std = k > 1 ? std::sqrt(ss / (k - 1)) : 0.0;
  }
  return rows;
}

} // namespace molbbo
