//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/evolve.h"

#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_util.h"

namespace molbbo {
namespace {

using testing::brute_validity;

int count_kind(const std::vector<MutationOp> &ops, MutationKind k) {
  return static_cast<int>(std::count_if(
      ops.begin(), ops.end(), [k](const MutationOp &op) { return op.kind == k; }));
}

// Every molecule reachable from g by 1..depth valid ops.
TabuSet reachable(const MolecularGraph &g, int depth, const ChemistryRules &rules) {
  TabuSet seen;
  std::vector<MolecularGraph> frontier{g};
  for (int d = 0; d < depth; ++d) {
    std::vector<MolecularGraph> next;
    for (const MolecularGraph &h : frontier)
      for (const MutationOp &op : enumerate_valid_mutations(h, rules)) {
        MolecularGraph m = apply_mutation(h, op);
        if (seen.insert(canonical_key(m)).second)
          next.push_back(std::move(m));
      }
    frontier = std::move(next);
  }
  return seen;
}

TEST(EnumerateMutations, Methane) {
  const auto ops = enumerate_valid_mutations(parse_smiles("C"), {});
  EXPECT_EQ(count_kind(ops, MutationKind::RemoveAtom), 0);
  std::set<AtomType> added;
  for (const MutationOp &op : ops)
    if (op.kind == MutationKind::AddAtom)
      added.insert(op.atom);
  EXPECT_EQ(added.size(), 4u);
}

TEST(EnumerateMutations, SaturatedFluorines) {
  const MolecularGraph ff = parse_smiles("FF");
  const auto ops = enumerate_valid_mutations(ff, {});
  EXPECT_EQ(count_kind(ops, MutationKind::AddAtom), 0);
  for (const MutationOp &op : ops) {
    const MolecularGraph m = apply_mutation(ff, op);
    EXPECT_FALSE(brute_validity(m, {}).has_value());
  }
}

TEST(EnumerateMutations, AtomCap) {
  const auto ops = enumerate_valid_mutations(parse_smiles("CCCCCCCCC"), {});
  EXPECT_EQ(count_kind(ops, MutationKind::AddAtom), 0);
  EXPECT_GT(ops.size(), 0u);
}

// Completeness: every single-step edit that the brute checker accepts is
// listed, for all four kinds.
TEST(EnumerateMutations, CompleteOnSmallGraphs) {
  std::mt19937_64 rng(31);
  const ChemistryRules rules;
  for (int trial = 0; trial < 100; ++trial) {
    const MolecularGraph g = testing::random_graph(rng, 1, 6);
    const auto ops = enumerate_valid_mutations(g, rules);
    int expected = 0;
    const int n = g.num_atoms();
    auto ok = [&](std::vector<AtomType> atoms, std::vector<Bond> bonds) {
      if (atoms.empty())
        return false;
      // Reject via the oracle without going through the library constructor.
      try {
        return !brute_validity(MolecularGraph(std::move(atoms), std::move(bonds)),
                               rules)
                    .has_value();
      } catch (const ChemistryError &) {
        return false;
      }
    };
    for (int v = 0; v < n; ++v)
      for (int t = 0; t < 4; ++t)
        for (int o = 1; o <= 3; ++o) {
          auto atoms = g.atoms();
          auto bonds = g.bonds();
          atoms.push_back(static_cast<AtomType>(t));
          bonds.push_back({v, n, o});
          expected += ok(atoms, bonds);
        }
    for (int v = 0; v < n; ++v) {
      std::vector<int> remap(n);
      for (int u = 0, k = 0; u < n; ++u)
        remap[u] = u == v ? -1 : k++;
      std::vector<AtomType> atoms;
      for (int u = 0; u < n; ++u)
        if (u != v)
          atoms.push_back(g.atom(u));
      std::vector<Bond> bonds;
      for (const Bond &b : g.bonds())
        if (b.begin != v && b.end != v)
          bonds.push_back({remap[b.begin], remap[b.end], b.order});
      expected += ok(atoms, bonds);
      for (int t = 0; t < 4; ++t) {
        if (static_cast<AtomType>(t) == g.atom(v))
          continue;
        auto sub = g.atoms();
        sub[v] = static_cast<AtomType>(t);
        expected += ok(sub, g.bonds());
      }
    }
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) {
        const int current = g.bond_order(u, v);
        for (int o = 0; o <= 3; ++o) {
          if (o == current)
            continue;
          std::vector<Bond> bonds;
          for (const Bond &b : g.bonds())
            if (!((b.begin == u && b.end == v) || (b.begin == v && b.end == u)))
              bonds.push_back(b);
          if (o > 0)
            bonds.push_back({u, v, o});
          expected += ok(g.atoms(), bonds);
        }
      }
    ASSERT_EQ(static_cast<int>(ops.size()), expected) << write_smiles(g);
  }
}

TEST(Mutate, ValidityOracle) {
  std::mt19937_64 rng(12345);
  const EaConfig cfg;
  int produced = 0;
  for (int i = 0; i < 100000; ++i) {
    const MolecularGraph parent = testing::random_graph(rng, 1, 9);
    const auto child = mutate(parent, cfg, rng);
    if (!child)
      continue;
    ++produced;
    ASSERT_FALSE(brute_validity(child->graph, cfg.chemistry).has_value())
        << write_smiles(parent) << " -> " << write_smiles(child->graph);
    ASSERT_NE(child->key, canonical_key(parent));
    ASSERT_EQ(child->key, canonical_key(child->graph));
  }
  EXPECT_GT(produced, 99000);
}

TEST(Mutate, Deterministic) {
  const EaConfig cfg;
  const MolecularGraph methane = parse_smiles("C");
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 50; ++i) {
    const auto x = mutate(methane, cfg, a);
    const auto y = mutate(methane, cfg, b);
    ASSERT_TRUE(x && y);
    EXPECT_EQ(x->key, y->key);
    EXPECT_LE(x->graph.num_atoms(), 3);
  }
}

TEST(Mutate, TabuSmallMolecules) {
  const MolecularGraph methane = parse_smiles("C");
  EaConfig cfg;
  for (const CanonicalKey &k : reachable(methane, 2, cfg.chemistry))
    if (parse_smiles(k.text).num_atoms() <= 2)
      cfg.tabu.insert(k);
  cfg.tabu.insert(canonical_key(methane));
  ASSERT_GE(cfg.tabu.size(), 8u);
  std::mt19937_64 rng(5);
  int successes = 0;
  for (int i = 0; i < 500; ++i) {
    const auto child = mutate(methane, cfg, rng);
    if (child) {
      ++successes;
      EXPECT_GE(child->graph.num_atoms(), 3);
      EXPECT_FALSE(cfg.tabu.contains(child->key));
    }
  }
  EXPECT_GT(successes, 0);
}

TEST(EaMaximize, AtomCountImproves) {
  EaConfig cfg;
  cfg.seed = 7;
  int calls = 0;
  const auto fitness = [&calls](const MolecularGraph &g, const CanonicalKey &) {
    ++calls;
    return static_cast<double>(g.num_atoms());
  };
  const EaResult r = ea_maximize(fitness, {parse_smiles("C")}, cfg);
  EXPECT_GT(r.best.fitness, 1.0);
  EXPECT_EQ(r.initial_evaluations, 1);
  EXPECT_LE(r.trace.size(), 100u);
  EXPECT_EQ(calls, r.initial_evaluations + static_cast<int>(r.trace.size()));
  // Elitism: the best fitness never decreases across steps.
  for (std::size_t i = 1; i < r.best_fitness_per_step.size(); ++i)
    EXPECT_GE(r.best_fitness_per_step[i], r.best_fitness_per_step[i - 1]);
}

TEST(EaMaximize, FullyBlocked) {
  const MolecularGraph methane = parse_smiles("C");
  EaConfig cfg;
  cfg.tabu = reachable(methane, 2, cfg.chemistry);
  cfg.tabu.erase(canonical_key(methane));
  const auto fitness = [](const MolecularGraph &g, const CanonicalKey &) {
    return static_cast<double>(g.num_atoms());
  };
  const EaResult r = ea_maximize(fitness, {methane}, cfg);
  EXPECT_EQ(r.best.key, canonical_key(methane));
  EXPECT_TRUE(r.trace.empty());
}

TEST(EaMaximize, TraceAvoidsTabu) {
  EaConfig cfg;
  cfg.seed = 3;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i)
    cfg.tabu.insert(canonical_key(testing::random_graph(rng, 2, 4)));
  const auto fitness = [](const MolecularGraph &g, const CanonicalKey &) {
    return -static_cast<double>(g.num_bonds()) + g.num_atoms();
  };
  const EaResult r =
      ea_maximize(fitness, {parse_smiles("CC"), parse_smiles("CO")}, cfg);
  TabuSet seen;
  for (const Scored &s : r.trace) {
    EXPECT_FALSE(cfg.tabu.contains(s.key));
    EXPECT_TRUE(seen.insert(s.key).second) << s.key.text;
  }
}

TEST(EaMaximize, Deterministic) {
  EaConfig cfg;
  cfg.seed = 11;
  const auto fitness = [](const MolecularGraph &g, const CanonicalKey &k) {
    return static_cast<double>(g.num_atoms()) - 0.01 * k.text.size();
  };
  const EaResult a = ea_maximize(fitness, {parse_smiles("C")}, cfg);
  const EaResult b = ea_maximize(fitness, {parse_smiles("C")}, cfg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    EXPECT_EQ(a.trace[i].key, b.trace[i].key);
}

TEST(SampleRandomMolecules, ValidAndReproducible) {
  SamplerConfig cfg;
  const auto a = sample_random_molecules(300, cfg, 9);
  const auto b = sample_random_molecules(300, cfg, 9);
  ASSERT_EQ(a.size(), 300u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(brute_validity(a[i], cfg.chemistry).has_value());
    EXPECT_EQ(canonical_key(a[i]), canonical_key(b[i]));
  }
  cfg.distinct = true;
  const auto d = sample_random_molecules(300, cfg, 9);
  TabuSet keys;
  for (const MolecularGraph &g : d)
    EXPECT_TRUE(keys.insert(canonical_key(g)).second);
}

} // namespace
} // namespace molbbo
