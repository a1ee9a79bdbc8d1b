//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/evolve.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "molbbo/random.h"

namespace molbbo {

std::string to_string(MutationKind k) {
  switch (k) {
  case MutationKind::AddAtom:
    return "add_atom";
  case MutationKind::RemoveAtom:
    return "remove_atom";
  case MutationKind::ChangeBond:
    return "change_bond";
  case MutationKind::SubstituteAtom:
    return "substitute_atom";
  }
  return "?";
}

namespace {

bool connected_without_vertex(const MolecularGraph &g, int removed) {
  std::vector<Bond> kept;
  for (const Bond &b : g.bonds()) {
    if (b.begin == removed || b.end == removed)
      continue;
    kept.push_back({b.begin - (b.begin > removed), b.end - (b.end > removed),
                    b.order});
  }
  return is_connected(g.num_atoms() - 1, kept);
}

bool connected_without_bond(const MolecularGraph &g, int u, int v) {
  std::vector<Bond> kept;
  for (const Bond &b : g.bonds())
    if (!((b.begin == u && b.end == v) || (b.begin == v && b.end == u)))
      kept.push_back(b);
  return is_connected(g.num_atoms(), kept);
}

} // namespace

std::vector<MutationOp> enumerate_valid_mutations(const MolecularGraph &g,
                                                  const ChemistryRules &rules) {
  std::vector<MutationOp> ops;
  const int n = g.num_atoms();

  if (n < rules.heavy_atom_limit) {
    for (int v = 0; v < n; ++v) {
      const int fv = free_valence(g, v);
      for (AtomType t : rules.atom_types)
        for (int o = 1; o <= std::min({fv, max_valence(t), kMaxBondOrder}); ++o)
          ops.push_back({MutationKind::AddAtom, v, -1, t, o});
    }
  }

  if (n > 1) {
    for (int v = 0; v < n; ++v)
      if (connected_without_vertex(g, v))
        ops.push_back({MutationKind::RemoveAtom, v});
  }

  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const int cur = g.bond_order(u, v);
      for (int o = 0; o <= kMaxBondOrder; ++o) {
        if (o == cur)
          continue;
        if (o == 0) {
          if (connected_without_bond(g, u, v))
            ops.push_back({MutationKind::ChangeBond, u, v, AtomType::C, 0});
          continue;
        }
        if (free_valence(g, u) + cur - o >= 0 &&
            free_valence(g, v) + cur - o >= 0)
          ops.push_back({MutationKind::ChangeBond, u, v, AtomType::C, o});
      }
    }
  }

  for (int v = 0; v < n; ++v)
    for (AtomType t : rules.atom_types)
      if (t != g.atom(v) && g.bond_order_sum(v) <= max_valence(t))
        ops.push_back({MutationKind::SubstituteAtom, v, -1, t});

  return ops;
}

MolecularGraph apply_mutation(const MolecularGraph &g, const MutationOp &op) {
  const int n = g.num_atoms();
  auto check_vertex = [&](int v) {
    if (v < 0 || v >= n)
      throw ChemistryError("mutation references a missing atom");
  };
  std::vector<AtomType> atoms = g.atoms();
  std::vector<Bond> bonds = g.bonds();

  switch (op.kind) {
  case MutationKind::AddAtom:
    check_vertex(op.vertex);
    atoms.push_back(op.atom);
    bonds.push_back({op.vertex, n, op.order});
    break;
  case MutationKind::RemoveAtom: {
    check_vertex(op.vertex);
    atoms.erase(atoms.begin() + op.vertex);
    std::vector<Bond> kept;
    for (const Bond &b : bonds) {
      if (b.begin == op.vertex || b.end == op.vertex)
        continue;
      kept.push_back({b.begin - (b.begin > op.vertex),
                      b.end - (b.end > op.vertex), b.order});
    }
    bonds = std::move(kept);
    break;
  }
  case MutationKind::ChangeBond: {
    check_vertex(op.vertex);
    check_vertex(op.other);
    auto it = std::find_if(bonds.begin(), bonds.end(), [&](const Bond &b) {
      return (b.begin == op.vertex && b.end == op.other) ||
             (b.begin == op.other && b.end == op.vertex);
    });
    if (it == bonds.end()) {
      if (op.order > 0)
        bonds.push_back({op.vertex, op.other, op.order});
    } else if (op.order == 0) {
      bonds.erase(it);
    } else {
      it->order = op.order;
    }
    break;
  }
  case MutationKind::SubstituteAtom:
    check_vertex(op.vertex);
    atoms[op.vertex] = op.atom;
    break;
  }
  return {std::move(atoms), std::move(bonds)};
}

void EaConfig::validate() const {
  if (steps < 1)
    throw std::invalid_argument("ea: steps must be >= 1");
  if (insert_per_step < 1)
    throw std::invalid_argument("ea: insert_per_step must be >= 1");
  if (max_population < 1)
    throw std::invalid_argument("ea: max_population must be >= 1");
  if (max_perturbations < 1 || max_perturbations > 2)
    throw std::invalid_argument("ea: max_perturbations must be 1 or 2");
  if (max_mutation_attempts < 1)
    throw std::invalid_argument("ea: max_mutation_attempts must be >= 1");
  if (chemistry.heavy_atom_limit < 1)
    throw std::invalid_argument("ea: heavy_atom_limit must be >= 1");
  if (chemistry.atom_types.empty())
    throw std::invalid_argument("ea: no atom types allowed");
}

std::optional<Mutant>
mutate(const MolecularGraph &g, const CanonicalKey &g_key, const EaConfig &cfg,
       std::mt19937_64 &rng,
       const std::function<bool(const CanonicalKey &)> &forbidden) {
  std::uniform_int_distribution<int> perturbations(1, cfg.max_perturbations);
  for (int attempt = 0; attempt < cfg.max_mutation_attempts; ++attempt) {
    const int k = perturbations(rng);
    std::optional<MolecularGraph> current;
    bool stuck = false;
    for (int i = 0; i < k; ++i) {
      const MolecularGraph &from = current ? *current : g;
      const std::vector<MutationOp> ops =
          enumerate_valid_mutations(from, cfg.chemistry);
      if (ops.empty()) {
        stuck = true;
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
      current = apply_mutation(from, ops[pick(rng)]);
    }
    if (stuck)
      continue;
    CanonicalKey key = canonical_key(*current);
    if (key == g_key || cfg.tabu.contains(key) || (forbidden && forbidden(key)))
      continue;
    return Mutant{std::move(*current), std::move(key)};
  }
  return std::nullopt;
}

std::optional<Mutant> mutate(const MolecularGraph &g, const EaConfig &cfg,
                             std::mt19937_64 &rng) {
  return mutate(g, canonical_key(g), cfg, rng, nullptr);
}

namespace {

struct Member {
  Scored scored;
  long seq; // insertion order; lower is older
};

// Lowest fitness, newest first among ties.
std::size_t worst_index(const std::vector<Member> &pop) {
  std::size_t w = 0;
  for (std::size_t i = 1; i < pop.size(); ++i) {
    const auto &a = pop[i], &b = pop[w];
    if (a.scored.fitness < b.scored.fitness ||
        (a.scored.fitness == b.scored.fitness && a.seq > b.seq))
      w = i;
  }
  return w;
}

// Highest fitness, oldest first among ties.
bool fitter(const Member &a, const Member &b) {
  if (a.scored.fitness != b.scored.fitness)
    return a.scored.fitness > b.scored.fitness;
  return a.seq < b.seq;
}

} // namespace

EaResult ea_maximize(const FitnessFn &fitness,
                     const std::vector<MolecularGraph> &initial,
                     const EaConfig &cfg,
                     const std::function<void(int)> &on_step) {
  cfg.validate();
  if (initial.empty())
    throw std::invalid_argument("ea_maximize: initial population is empty");

  std::mt19937_64 rng(cfg.seed);
  EaResult result{
      .best = {initial.front(), {}, 0.0}, .trace = {}, .best_fitness_per_step = {}};
  std::vector<Member> population;
  TabuSet seen;
  long seq = 0;

  for (const MolecularGraph &g : initial) {
    CanonicalKey key = canonical_key(g);
    if (!seen.insert(key).second)
      continue;
    const double f = fitness(g, key);
    ++result.initial_evaluations;
    population.push_back({{g, std::move(key), f}, seq++});
  }
  while (static_cast<int>(population.size()) > cfg.max_population)
    population.erase(population.begin() +
                     static_cast<long>(worst_index(population)));

  auto forbidden = [&](const CanonicalKey &k) { return seen.contains(k); };

  for (int step = 0; step < cfg.steps; ++step) {
    if (on_step)
      on_step(step + 1);
    std::vector<Member> parents = population;
    std::stable_sort(parents.begin(), parents.end(), fitter);
    std::vector<char> failed(parents.size(), 0);
    std::size_t failures = 0;
    int produced = 0;
    for (std::size_t cursor = 0;
         produced < cfg.insert_per_step && failures < parents.size();
         ++cursor) {
      const std::size_t p = cursor % parents.size();
      if (failed[p])
        continue;
      const Scored &parent = parents[p].scored;
      std::optional<Mutant> child =
          mutate(parent.graph, parent.key, cfg, rng, forbidden);
      if (!child) {
        failed[p] = 1;
        ++failures;
        continue;
      }
      const double f = fitness(child->graph, child->key);
      ++produced;
      seen.insert(child->key);
      result.trace.push_back({child->graph, child->key, f});

      const bool full = static_cast<int>(population.size()) >= cfg.max_population;
      if (!full || f > population[worst_index(population)].scored.fitness) {
        population.push_back({{std::move(child->graph), std::move(child->key), f},
                              seq++});
        if (static_cast<int>(population.size()) > cfg.max_population)
          population.erase(population.begin() +
                           static_cast<long>(worst_index(population)));
      }
    }
    ++result.steps_run;
    const auto best = std::min_element(population.begin(), population.end(),
                                       fitter);
    result.best_fitness_per_step.push_back(best->scored.fitness);
    if (produced == 0)
      break;
  }

  result.best =
      std::min_element(population.begin(), population.end(), fitter)->scored;
  return result;
}

std::vector<MolecularGraph> sample_random_molecules(int count,
                                                    const SamplerConfig &cfg,
                                                    std::uint64_t seed) {
  if (count < 0)
    throw std::invalid_argument("sample count must be >= 0");
  if (cfg.max_walk_length < 0)
    throw std::invalid_argument("max_walk_length must be >= 0");
  const MolecularGraph methane = MolecularGraph::single_atom(AtomType::C);
  std::vector<MolecularGraph> out;
  out.reserve(static_cast<std::size_t>(count));
  TabuSet seen;
  // Bounds the work when the space holds fewer than `count` molecules.
  const long max_draws = 100L * count + 1000;
  for (long i = 0; static_cast<int>(out.size()) < count; ++i) {
    if (cfg.distinct && i >= max_draws)
      throw std::runtime_error("could not sample " + std::to_string(count) +
                               " distinct molecules");
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    std::uniform_int_distribution<int> length(0, cfg.max_walk_length);
    MolecularGraph g = methane;
    for (int k = length(rng); k > 0; --k) {
      const std::vector<MutationOp> ops = enumerate_valid_mutations(g, cfg.chemistry);
      if (ops.empty())
        break;
      std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
      g = apply_mutation(g, ops[pick(rng)]);
    }
    if (cfg.distinct && !seen.insert(canonical_key(g)).second)
      continue;
    out.push_back(std::move(g));
  }
  return out;
}

} // namespace molbbo
