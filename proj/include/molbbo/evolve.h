//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_EVOLVE_H_
#define MOLBBO_EVOLVE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "molbbo/molgraph.h"

namespace molbbo {

enum class MutationKind { AddAtom, RemoveAtom, ChangeBond, SubstituteAtom };

std::string to_string(MutationKind k);

// AddAtom: new atom of type `atom` bonded to `vertex` with `order`.
// RemoveAtom: delete `vertex` and its bonds.
// ChangeBond: set the bond between `vertex` and `other` to `order`
//             (0 deletes it, absent bonds are created).
// SubstituteAtom: change the type of `vertex` to `atom`.
struct MutationOp {
  MutationKind kind;
  int vertex = -1;
  int other = -1;
  AtomType atom = AtomType::C;
  int order = 0;

  friend bool operator==(const MutationOp &, const MutationOp &) = default;
};

/// Every single-step mutation of g that yields a graph valid under rules.
std::vector<MutationOp> enumerate_valid_mutations(const MolecularGraph &g,
                                                  const ChemistryRules &rules);

// Throws ChemistryError when the result would be invalid.
MolecularGraph apply_mutation(const MolecularGraph &g, const MutationOp &op);

using TabuSet = std::unordered_set<CanonicalKey, CanonicalKeyHash>;

struct EaConfig {
  int steps = 10;
  int insert_per_step = 10;
  int max_population = 300;
  int max_perturbations = 2;
  int max_mutation_attempts = 50;
  ChemistryRules chemistry;
  TabuSet tabu;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Mutant {
  MolecularGraph graph;
  CanonicalKey key;
};

/// Applies 1..max_perturbations random valid mutations. The result is not
/// isomorphic to g and not in cfg.tabu; up to max_mutation_attempts tries,
/// nullopt when exhausted.
std::optional<Mutant> mutate(const MolecularGraph &g, const EaConfig &cfg,
                             std::mt19937_64 &rng);

// As above with an extra rejection predicate on candidate keys.
std::optional<Mutant>
mutate(const MolecularGraph &g, const CanonicalKey &g_key, const EaConfig &cfg,
       std::mt19937_64 &rng,
       const std::function<bool(const CanonicalKey &)> &forbidden);

struct Scored {
  MolecularGraph graph;
  CanonicalKey key;
  double fitness;
};

struct EaResult {
  Scored best;
  // Every child whose fitness was computed, in evaluation order. The
  // initial population is not part of the trace.
  std::vector<Scored> trace;
  std::vector<double> best_fitness_per_step;
  int initial_evaluations = 0;
  int steps_run = 0;
};

using FitnessFn =
    std::function<double(const MolecularGraph &, const CanonicalKey &)>;

/// Steady-state elitist EA. Each step walks the population best-first
/// (cyclically) and mutates parents until insert_per_step children have been
/// scored or every parent failed once; a child enters the population when it
/// is strictly fitter than the worst member or the population is not full.
/// Stops early after a step that scores no child. `on_step` is told the
/// 1-based index of each step before it starts.
EaResult ea_maximize(const FitnessFn &fitness,
                     const std::vector<MolecularGraph> &initial,
                     const EaConfig &cfg,
                     const std::function<void(int)> &on_step = {});

struct SamplerConfig {
  int max_walk_length = 20;
  ChemistryRules chemistry;
  bool distinct = false; // drop repeats of already sampled molecules
};

/// Random valid molecules: walks of uniform length in [0, max_walk_length]
/// of uniformly chosen valid mutations, starting from methane. Molecule i
/// only depends on (seed, i) unless `distinct` skips repeats.
std::vector<MolecularGraph> sample_random_molecules(int count,
                                                    const SamplerConfig &cfg,
                                                    std::uint64_t seed);

} // namespace molbbo

#endif // MOLBBO_EVOLVE_H_
