//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_BENCH_H_
#define MOLBBO_BENCH_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "molbbo/gp.h"
#include "molbbo/runlog.h"
#include "molbbo/shingles.h"

namespace molbbo {

// Targets lo, lo + step, ..., hi (inclusive).
struct TargetGrid {
  double lo = -10.0;
  double hi = -1.0;
  double step = 0.01;

  void validate() const;
  std::vector<double> points() const;
  // Parses "lo:hi:step".
  static TargetGrid parse(const std::string &text);
};

enum class EffortAxis { Calls, CpuTime };

struct CurvePoint {
  double x;
  double proportion;
};

// Thrown when logs from different objectives are aggregated.
class MixedObjectivesError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Fraction of (run, target) pairs reached as a function of effort. One point
/// per distinct effort value recorded by any run.
std::vector<CurvePoint> ecdf(const std::vector<RunLog> &logs,
                             const TargetGrid &grid, EffortAxis axis,
                             bool allow_mixed_objectives = false);

struct ErtResult {
  std::optional<double> ert; // empty: no run reached the target
  int successes = 0;
  int runs = 0;
  std::vector<double> success_efforts;
};

/// Expected running time: total effort of all runs until the target is hit
/// divided by the number of hits. Failed runs are charged the budget on the
/// calls axis and their last recorded time on the CPU axis.
ErtResult ert(const std::vector<RunLog> &logs, double target, EffortAxis axis,
              bool allow_mixed_objectives = false);

// Effort at which a single run first reaches target, if ever.
std::optional<double> effort_to_target(const RunLog &log, double target,
                                       EffortAxis axis);

struct LabeledMolecule {
  std::string smiles;
  double value;
};

struct LearningCurveRow {
  int size;
  double mae_mean;
  double mae_std;
  std::vector<double> fold_mae;
};

struct LearningCurveOptions {
  int shingle_capacity = kDefaultShingleCapacity;
  int heavy_atom_limit = kDefaultHeavyAtomLimit;
  int gp_random_starts = 4;
  int gp_max_iterations = 200;
};

/// K-fold learning curve: for every fold and every size, trains a GP on
/// `size` molecules drawn from the other folds and reports the mean absolute
/// error on the held-out fold.
std::vector<LearningCurveRow>
learning_curve(const std::vector<LabeledMolecule> &dataset,
               const std::vector<int> &sizes, int folds, const KernelSpec &spec,
               std::uint64_t seed, const LearningCurveOptions &options = {});

} // namespace molbbo

#endif // MOLBBO_BENCH_H_
