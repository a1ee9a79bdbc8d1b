//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_BBO_H_
#define MOLBBO_BBO_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "molbbo/acquisition.h"
#include "molbbo/evolve.h"
#include "molbbo/gp.h"
#include "molbbo/objective.h"
#include "molbbo/runlog.h"
#include "molbbo/shingles.h"

namespace molbbo {

/// An element of the dataset of exactly evaluated molecules.
struct EvaluatedMolecule {
  MolecularGraph graph;
  CanonicalKey key;
  std::string smiles;
  ShingleVector descriptor;
  double value; // exact objective output
  int step = 0;
  int restart = 0;
  long call_index = 0;
  double cpu_time_s = 0.0;
  double wall_time_s = 0.0;
};

// Logical: one time unit per objective call, so logs are reproducible.
// Process: measured CPU (self + children) and wall seconds since start.
enum class Clock { Logical, Process };

struct BboConfig {
  int restarts = 10;
  int init_pop_size = 10;
  double xi = 0.01;
  long budget = 1000;
  EaConfig ea; // tabu and seed are set per restart
  KernelSpec kernel;
  int gp_random_starts = 4;
  int gp_max_iterations = 200;
  ChemistryRules chemistry;
  int shingle_capacity = kDefaultShingleCapacity;
  std::vector<std::string> seed_molecules{"C"};
  std::uint64_t master_seed = 0;
  int parallelism = 1;
  // Optional extra stop condition on the best exact value.
  std::optional<double> stop_at_value;
  // Consecutive steps without a new candidate before giving up.
  int max_idle_steps = 10;
  Clock clock = Clock::Logical;

  void validate() const;
};

/// Draws min(size, |D|) distinct molecules, one at a time without
/// replacement, with probability proportional to objective rank (the worst
/// molecule has rank 1).
std::vector<MolecularGraph>
select_initial_population(const std::vector<EvaluatedMolecule> &dataset,
                          int size, std::mt19937_64 &rng);

using Surrogate = std::function<Prediction(const MolecularGraph &)>;

/// GP prediction on the frozen shingle encoding of a molecule. `unseen`
/// accumulates shingles missing from the dictionary. The model and
/// dictionary must outlive the returned function.
Surrogate shingle_surrogate(const GpModel &model, const ShingleDictionary &dict,
                            double scale, std::atomic<long> *unseen = nullptr);

/// EI of the surrogate prediction; molecules whose key is in `known` score
/// exactly 0 without querying the surrogate.
FitnessFn make_ei_fitness(Surrogate surrogate, const TabuSet &known,
                          double f_max, double xi,
                          std::atomic<long> *surrogate_calls = nullptr);

struct StepReport {
  int step = 0;
  std::vector<EvaluatedMolecule> added;
  int failed_evaluations = 0;
  long surrogate_calls = 0;
  long unseen_shingles = 0;
  int restarts_without_candidate = 0;
  KernelSpec fitted_kernel;
  double lml = 0.0;
};

enum class StopReason { None, Budget, Target, Stalled, ObjectiveUnavailable };

std::string to_string(StopReason r);

/// Surrogate-based optimization loop: fit a GP on the dataset, run EI
/// maximizing EA restarts, evaluate one new molecule per restart exactly,
/// repeat until the budget is spent.
class BboRun {
public:
  using RecordSink = std::function<void(const CallRecord &)>;

  BboRun(BboConfig cfg, std::shared_ptr<Objective> objective);

  void set_record_sink(RecordSink sink) { sink_ = std::move(sink); }

  // Evaluates the seed molecules. Called by run() when needed.
  void initialize();
  bool initialized() const { return initialized_; }

  StepReport step();

  // Runs to completion; ObjectiveUnavailable ends the run early.
  StopReason run();

  StopReason stop_reason() const { return stop_reason_; }
  bool finished() const;

  const BboConfig &config() const { return cfg_; }
  const std::vector<EvaluatedMolecule> &dataset() const { return dataset_; }
  const ShingleDictionary &dictionary() const { return dict_; }
  long calls() const { return calls_; }
  int next_step() const { return next_step_; }
  std::optional<double> best_value() const;
  const EvaluatedMolecule *best() const;

  /// Run state sufficient to continue bit-exactly (timing aside).
  nlohmann::json save_state() const;
  void restore_state(const nlohmann::json &state);

private:
  struct Outcome {
    std::optional<double> value;
    std::string error;
    bool unavailable = false;
  };

  Outcome evaluate_exact(const MolecularGraph &g, const CanonicalKey &key);
  const EvaluatedMolecule *append(CanonicalKey key, const Outcome &out,
                                  int step, int restart);
  void update_stop_reason();
  void stamp(CallRecord &r) const;
  template <class F> void for_each_index(int count, F &&fn) const;

  BboConfig cfg_;
  std::shared_ptr<Objective> objective_;
  RecordSink sink_;
  ShingleDictionary dict_;
  std::vector<EvaluatedMolecule> dataset_;
  TabuSet attempted_; // every key submitted to the objective
  std::vector<std::string> failed_smiles_;
  long calls_ = 0;
  int next_step_ = 1;
  int idle_steps_ = 0;
  bool initialized_ = false;
  StopReason stop_reason_ = StopReason::None;
  std::optional<double> best_;

  double cpu_offset_ = 0.0;
  double wall_offset_ = 0.0;
  double cpu_start_ = 0.0;
  std::chrono::steady_clock::time_point wall_start_;
};

/// In-memory log of a complete run.
RunLog run_bbo(const BboConfig &cfg, std::shared_ptr<Objective> objective,
               const std::string &objective_description = "");

/// Baseline: the same EA used directly on the exact objective (cached and
/// budget-counted), starting from the seed molecules.
class EaBaselineRun {
public:
  using RecordSink = std::function<void(const CallRecord &)>;

  EaBaselineRun(BboConfig cfg, std::shared_ptr<Objective> objective);
  void set_record_sink(RecordSink sink) { sink_ = std::move(sink); }

  StopReason run();

  long calls() const { return calls_; }
  std::optional<double> best_value() const { return best_; }
  const std::string &best_smiles() const { return best_smiles_; }

private:
  BboConfig cfg_;
  std::shared_ptr<Objective> objective_;
  RecordSink sink_;
  long calls_ = 0;
  std::optional<double> best_;
  std::string best_smiles_;
};

RunLog run_ea_baseline(const BboConfig &cfg, std::shared_ptr<Objective> objective,
                       const std::string &objective_description = "");

// Process CPU time (self and reaped children) in seconds.
double process_cpu_seconds();

} // namespace molbbo

#endif // MOLBBO_BBO_H_
