//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_OBJECTIVE_H_
#define MOLBBO_OBJECTIVE_H_

#include <atomic>
#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "molbbo/molgraph.h"
#include "molbbo/shingles.h"

namespace molbbo {

enum class ObjectiveKind {
  SyntheticLinearShingles,
  SyntheticAtomCount,
  ExternalProcess
};

std::string to_string(ObjectiveKind k);
ObjectiveKind objective_kind_from_string(const std::string &s);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::SyntheticLinearShingles;
  std::uint64_t seed = 0;
  double noise_std = 0.0;
  // SyntheticLinearShingles output range.
  double range_lo = -10.0;
  double range_hi = -1.0;
  int heavy_atom_limit = kDefaultHeavyAtomLimit;
  // ExternalProcess
  std::string command;
  double timeout_s = 600.0;
  int pool_size = 1;

  void validate() const;
  // Identity used to decide whether run logs are comparable.
  std::string describe() const;
};

class ObjectiveError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// The evaluator did not answer within the timeout.
class ObjectiveTimeout : public ObjectiveError {
public:
  using ObjectiveError::ObjectiveError;
};

// The evaluator answered with something other than OK/ERR.
class ObjectiveProtocolError : public ObjectiveError {
public:
  using ObjectiveError::ObjectiveError;
};

// The evaluator answered ERR for this molecule.
class ObjectiveEvaluationError : public ObjectiveError {
public:
  using ObjectiveError::ObjectiveError;
};

// The evaluator cannot be started or keeps dying; the run must stop.
class ObjectiveUnavailable : public ObjectiveError {
public:
  using ObjectiveError::ObjectiveError;
};

class BudgetExhausted : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Exact objective f(molecule), to be maximized.
class Objective {
public:
  virtual ~Objective() = default;

  virtual double evaluate(const MolecularGraph &g, const CanonicalKey &key) = 0;

  double evaluate(const MolecularGraph &g) { return evaluate(g, canonical_key(g)); }
};

/// Sum over atoms of a pseudo-random weight in [-1, 1] attached to the
/// atom's radius-1 shingle, mapped affinely from [-L, L] (L = heavy-atom
/// limit) onto [range_lo, range_hi].
class SyntheticLinearShingles : public Objective {
public:
  explicit SyntheticLinearShingles(const ObjectiveSpec &spec);

  double weight(const ShingleKey &key) const;
  double raw(const MolecularGraph &g) const;
  double evaluate(const MolecularGraph &g, const CanonicalKey &key) override;
  using Objective::evaluate;

  double scale() const { return scale_; }
  double shift() const { return shift_; }

private:
  std::uint64_t seed_;
  double noise_std_;
  double scale_;
  double shift_;
};

class SyntheticAtomCount : public Objective {
public:
  explicit SyntheticAtomCount(const ObjectiveSpec &spec)
      : seed_(spec.seed), noise_std_(spec.noise_std) {}

  double evaluate(const MolecularGraph &g, const CanonicalKey &key) override;
  using Objective::evaluate;

private:
  std::uint64_t seed_;
  double noise_std_;
};

// Deterministic N(0, std^2) draw keyed by (seed, molecule).
double seeded_noise(std::uint64_t seed, const CanonicalKey &key, double std);

std::unique_ptr<Objective> make_objective(const ObjectiveSpec &spec);

/// Memoizes an objective by canonical key and counts the underlying calls.
/// An optional budget makes calls beyond it throw BudgetExhausted. Safe for
/// concurrent use: a key being evaluated is waited on, not evaluated twice.
/// Failed evaluations are charged but not cached.
class CachedObjective : public Objective {
public:
  explicit CachedObjective(std::shared_ptr<Objective> inner,
                           std::optional<long> budget = std::nullopt);

  double evaluate(const MolecularGraph &g, const CanonicalKey &key) override;
  using Objective::evaluate;

  long calls() const { return calls_.load(); }
  std::optional<double> lookup(const CanonicalKey &key) const;
  std::optional<long> budget() const { return budget_; }

private:
  std::shared_ptr<Objective> inner_;
  std::optional<long> budget_;
  std::atomic<long> calls_{0};
  mutable std::mutex mutex_;
  std::unordered_map<CanonicalKey, std::shared_future<double>, CanonicalKeyHash>
      cache_;
};

} // namespace molbbo

#endif // MOLBBO_OBJECTIVE_H_
