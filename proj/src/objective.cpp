//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/objective.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "molbbo/external_objective.h"
#include "molbbo/random.h"

namespace molbbo {

std::string to_string(ObjectiveKind k) {
  switch (k) {
  case ObjectiveKind::SyntheticLinearShingles:
    return "synthetic_linear_shingles";
  case ObjectiveKind::SyntheticAtomCount:
    return "synthetic_atom_count";
  case ObjectiveKind::ExternalProcess:
    return "external_process";
  }
  return "?";
}

ObjectiveKind objective_kind_from_string(const std::string &s) {
  for (ObjectiveKind k :
       {ObjectiveKind::SyntheticLinearShingles, ObjectiveKind::SyntheticAtomCount,
        ObjectiveKind::ExternalProcess})
    if (to_string(k) == s)
      return k;
  throw std::invalid_argument("unknown objective kind '" + s + "'");
}

void ObjectiveSpec::validate() const {
  if (!(noise_std >= 0.0))
    throw std::invalid_argument("objective: noise_std must be >= 0");
  if (kind == ObjectiveKind::SyntheticLinearShingles && !(range_lo < range_hi))
    throw std::invalid_argument("objective: range_lo must be below range_hi");
  if (heavy_atom_limit < 1)
    throw std::invalid_argument("objective: heavy_atom_limit must be >= 1");
  if (kind == ObjectiveKind::ExternalProcess) {
    if (command.empty())
      throw std::invalid_argument("objective: external_process needs a command");
    if (!(timeout_s > 0.0))
      throw std::invalid_argument("objective: timeout_s must be > 0");
    if (pool_size < 1)
      throw std::invalid_argument("objective: pool_size must be >= 1");
  }
}

std::string ObjectiveSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(kind);
  switch (kind) {
  case ObjectiveKind::SyntheticLinearShingles:
    os << "(seed=" << seed << ",noise=" << noise_std << ",range=" << range_lo
       << ".." << range_hi << ",L=" << heavy_atom_limit << ")";
    break;
  case ObjectiveKind::SyntheticAtomCount:
    os << "(seed=" << seed << ",noise=" << noise_std << ")";
    break;
  case ObjectiveKind::ExternalProcess:
    os << "(" << command << ")";
    break;
  }
  return os.str();
}

double seeded_noise(std::uint64_t seed, const CanonicalKey &key, double std) {
  if (std == 0.0)
    return 0.0;
  // Box-Muller from two hashed uniforms in (0, 1].
  const std::uint64_t h1 = derive_seed(seed, {fnv1a64(key.text), 1});
  const std::uint64_t h2 = derive_seed(seed, {fnv1a64(key.text), 2});
  const double u1 = (static_cast<double>(h1 >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std * std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

SyntheticLinearShingles::SyntheticLinearShingles(const ObjectiveSpec &spec)
    : seed_(spec.seed), noise_std_(spec.noise_std) {
  const double half_width = spec.heavy_atom_limit;
  scale_ = (spec.range_hi - spec.range_lo) / (2.0 * half_width);
  shift_ = spec.range_lo + half_width * scale_;
}

double SyntheticLinearShingles::weight(const ShingleKey &key) const {
  const std::uint64_t h = derive_seed(seed_, {fnv1a64(key.to_string())});
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53; // [0, 1)
  return 2.0 * u - 1.0;
}

double SyntheticLinearShingles::raw(const MolecularGraph &g) const {
  // Fixed summation order keeps the value bitwise independent of atom order.
  std::vector<std::string> keys;
  for (const ShingleKey &k : extract_shingles(g))
    keys.push_back(k.to_string());
  std::sort(keys.begin(), keys.end());
  double sum = 0.0;
  for (const std::string &k : keys)
    sum += weight(ShingleKey::from_string(k));
  return sum;
}

double SyntheticLinearShingles::evaluate(const MolecularGraph &g,
                                         const CanonicalKey &key) {
  return shift_ + scale_ * raw(g) + seeded_noise(seed_, key, noise_std_);
}

double SyntheticAtomCount::evaluate(const MolecularGraph &g,
                                    const CanonicalKey &key) {
  return g.num_atoms() + seeded_noise(seed_, key, noise_std_);
}

std::unique_ptr<Objective> make_objective(const ObjectiveSpec &spec) {
  spec.validate();
  switch (spec.kind) {
  case ObjectiveKind::SyntheticLinearShingles:
    return std::make_unique<SyntheticLinearShingles>(spec);
  case ObjectiveKind::SyntheticAtomCount:
    return std::make_unique<SyntheticAtomCount>(spec);
  case ObjectiveKind::ExternalProcess:
    return std::make_unique<ExternalProcessObjective>(
        spec.command,
        std::chrono::milliseconds(
            static_cast<long>(std::llround(spec.timeout_s * 1000.0))),
        spec.pool_size);
  }
  throw std::invalid_argument("unknown objective kind");
}

CachedObjective::CachedObjective(std::shared_ptr<Objective> inner,
                                 std::optional<long> budget)
    : inner_(std::move(inner)), budget_(budget) {
  if (!inner_)
    throw std::invalid_argument("CachedObjective: null objective");
}

std::optional<double> CachedObjective::lookup(const CanonicalKey &key) const {
  std::shared_future<double> f;
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it == cache_.end())
      return std::nullopt;
    f = it->second;
  }
  if (f.wait_for(std::chrono::seconds(0)) != std::future_status::ready)
    return std::nullopt;
  return f.get();
}

double CachedObjective::evaluate(const MolecularGraph &g,
                                 const CanonicalKey &key) {
  std::promise<double> promise;
  {
    std::unique_lock lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      std::shared_future<double> f = it->second;
      lock.unlock();
      return f.get();
    }
    if (budget_ && calls_.load() >= *budget_)
      throw BudgetExhausted("objective budget of " + std::to_string(*budget_) +
                            " calls exhausted");
    ++calls_;
    cache_.emplace(key, promise.get_future().share());
  }
  try {
    const double value = inner_->evaluate(g, key);
    promise.set_value(value);
    return value;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    cache_.erase(key);
    throw;
  }
}

} // namespace molbbo
