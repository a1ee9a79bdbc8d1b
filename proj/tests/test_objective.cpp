//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/objective.h"

#include <cstdint>
#include <fstream>
#include <random>
#include <thread>
#include <unordered_set>

#include <gtest/gtest.h>

#include "molbbo/external_objective.h"
#include "test_util.h"

namespace molbbo {
namespace {

// Hand-written copies of the hashing steps so the weights are recomputed
// without calling library code.
std::uint64_t oracle_mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double oracle_weight(std::uint64_t seed, const std::string &shingle) {
  std::uint64_t f = 0xcbf29ce484222325ULL;
  for (unsigned char c : shingle) {
    f ^= c;
    f *= 0x100000001b3ULL;
  }
  std::uint64_t h = oracle_mix(seed);
  h = oracle_mix(h ^ oracle_mix(f + 0x632be59bd9b4e019ULL));
  return 2.0 * (static_cast<double>(h >> 11) / 9007199254740992.0) - 1.0;
}

TEST(SyntheticAtomCount, Methane) {
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::SyntheticAtomCount;
  EXPECT_EQ(make_objective(spec)->evaluate(parse_smiles("C")), 1.0);
  EXPECT_EQ(make_objective(spec)->evaluate(parse_smiles("CC(O)C#N")), 5.0);
}

TEST(SyntheticLinearShingles, EthanolHandSum) {
  ObjectiveSpec spec;
  spec.seed = 1234;
  const auto f = make_objective(spec);
  const double raw = oracle_weight(1234, "C|1:C") +
                     oracle_weight(1234, "C|1:C,1:O") +
                     oracle_weight(1234, "O|1:C");
  // [-9, 9] maps affinely onto [-10, -1].
  const double expected = -10.0 + (raw + 9.0) * (9.0 / 18.0);
  EXPECT_NEAR(f->evaluate(parse_smiles("CCO")), expected, 1e-12);
  EXPECT_NEAR(f->evaluate(parse_smiles("OCC")), expected, 1e-12);
}

TEST(SyntheticLinearShingles, WeightsInRange) {
  ObjectiveSpec spec;
  spec.seed = 5;
  SyntheticLinearShingles f(spec);
  std::mt19937_64 rng(0);
  for (int i = 0; i < 200; ++i) {
    const MolecularGraph g = testing::random_graph(rng, 1, 9);
    for (const ShingleKey &k : extract_shingles(g)) {
      const double w = f.weight(k);
      EXPECT_GE(w, -1.0);
      EXPECT_LE(w, 1.0);
      EXPECT_EQ(w, oracle_weight(5, k.to_string()));
    }
    const double v = f.evaluate(g);
    EXPECT_GE(v, -10.0);
    EXPECT_LE(v, -1.0);
  }
}

TEST(SyntheticLinearShingles, PermutationInvariant) {
  ObjectiveSpec spec;
  spec.seed = 8;
  spec.noise_std = 0.2;
  const auto f = make_objective(spec);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const MolecularGraph g = testing::random_graph(rng, 1, 9);
    const double v = f->evaluate(g);
    for (int k = 0; k < 3; ++k)
      EXPECT_EQ(f->evaluate(g.relabeled(testing::random_permutation(rng, g.num_atoms()))),
                v);
  }
}

TEST(SyntheticLinearShingles, SeedChangesWeights) {
  ObjectiveSpec a, b;
  a.seed = 1;
  b.seed = 2;
  EXPECT_NE(make_objective(a)->evaluate(parse_smiles("CCO")),
            make_objective(b)->evaluate(parse_smiles("CCO")));
}

TEST(ObjectiveSpec, Validation) {
  ObjectiveSpec s;
  s.noise_std = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ObjectiveSpec{};
  s.range_lo = 0;
  s.range_hi = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ObjectiveSpec{};
  s.kind = ObjectiveKind::ExternalProcess;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(objective_kind_from_string("synthetic_atom_count"),
            ObjectiveKind::SyntheticAtomCount);
  EXPECT_THROW(objective_kind_from_string("dft"), std::invalid_argument);
}

class CountingObjective : public Objective {
public:
  double evaluate(const MolecularGraph &g, const CanonicalKey &) override {
    ++calls;
    if (fail_next) {
      fail_next = false;
      throw ObjectiveEvaluationError("boom");
    }
    return g.num_atoms();
  }
  using Objective::evaluate;
  int calls = 0;
  bool fail_next = false;
};

TEST(CachedObjective, IsomorphicMoleculesHitTheCache) {
  auto inner = std::make_shared<CountingObjective>();
  CachedObjective cached(inner);
  cached.evaluate(parse_smiles("CCO"));
  cached.evaluate(parse_smiles("OCC"));
  EXPECT_EQ(inner->calls, 1);
  EXPECT_EQ(cached.calls(), 1);
  EXPECT_EQ(cached.lookup(canonical_key(parse_smiles("OCC"))), 3.0);
  EXPECT_FALSE(cached.lookup(canonical_key(parse_smiles("CC"))).has_value());
}

TEST(CachedObjective, CountsDistinctKeysAndEnforcesBudget) {
  auto inner = std::make_shared<CountingObjective>();
  CachedObjective cached(inner, 5);
  std::mt19937_64 rng(2);
  std::unordered_set<CanonicalKey, CanonicalKeyHash> keys;
  std::vector<MolecularGraph> graphs;
  while (keys.size() < 5) {
    MolecularGraph g = testing::random_graph(rng, 2, 6);
    if (keys.insert(canonical_key(g)).second)
      graphs.push_back(std::move(g));
  }
  for (int rep = 0; rep < 3; ++rep)
    for (const MolecularGraph &g : graphs)
      cached.evaluate(g);
  EXPECT_EQ(cached.calls(), 5);
  EXPECT_EQ(inner->calls, 5);
  MolecularGraph extra = testing::random_graph(rng, 7, 9);
  EXPECT_THROW(cached.evaluate(extra), BudgetExhausted);
  EXPECT_EQ(cached.calls(), 5);
}

TEST(CachedObjective, FailuresAreChargedNotCached) {
  auto inner = std::make_shared<CountingObjective>();
  CachedObjective cached(inner);
  inner->fail_next = true;
  EXPECT_THROW(cached.evaluate(parse_smiles("CC")), ObjectiveEvaluationError);
  EXPECT_EQ(cached.evaluate(parse_smiles("CC")), 2.0);
  EXPECT_EQ(cached.calls(), 2);
}

TEST(CachedObjective, ConcurrentSameKeyEvaluatesOnce) {
  auto inner = std::make_shared<CountingObjective>();
  CachedObjective cached(inner);
  const MolecularGraph g = parse_smiles("CC(C)(C)O");
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      for (int k = 0; k < 100; ++k)
        cached.evaluate(g);
    });
  for (auto &t : threads)
    t.join();
  EXPECT_EQ(inner->calls, 1);
}

TEST(ParseReply, Forms) {
  Reply r = parse_reply("OK -3.25");
  EXPECT_EQ(r.kind, ReplyKind::Ok);
  EXPECT_EQ(r.value, -3.25);
  EXPECT_EQ(parse_reply("OK 1e-3").value, 1e-3);
  r = parse_reply("ERR scf did not converge");
  EXPECT_EQ(r.kind, ReplyKind::Err);
  EXPECT_EQ(r.message, "scf did not converge");
  for (const char *bad : {"OK", "OK ", "OK abc", "OK 1.0 x", "ok 1", "", "OK nan",
                          "VALUE 3"})
    EXPECT_EQ(parse_reply(bad).kind, ReplyKind::Malformed) << bad;
}

class ExternalProcess : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = testing::scratch_dir("external");
    script_ = (dir_ / "eval.sh").string();
    std::ofstream(script_) << R"(while read cmd smi; do
  case "$smi" in
    C) echo "OK 1.25" ;;
    N) echo "ERR unsupported element" ;;
    O) echo "energy is low" ;;
    F) sleep 10 ;;
    *) echo "OK 2" ;;
  esac
done
)";
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path dir_;
  std::string script_;
};

TEST_F(ExternalProcess, Protocol) {
  ExternalProcessObjective f("sh " + script_, std::chrono::milliseconds(500), 1);
  EXPECT_EQ(f.evaluate_smiles("C"), 1.25);
  EXPECT_EQ(f.evaluate(parse_smiles("OCC")), 2.0);
  EXPECT_EQ(f.children_started(), 1);
  EXPECT_THROW(f.evaluate_smiles("N"), ObjectiveEvaluationError);
  EXPECT_EQ(f.evaluate_smiles("C"), 1.25);
  EXPECT_EQ(f.children_started(), 1);
  EXPECT_THROW(f.evaluate_smiles("O"), ObjectiveProtocolError);
  EXPECT_EQ(f.evaluate_smiles("C"), 1.25);
  EXPECT_EQ(f.children_started(), 2);
}

TEST_F(ExternalProcess, TimeoutKillsAndReplacesChild) {
  ExternalProcessObjective f("sh " + script_, std::chrono::milliseconds(300), 1);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(f.evaluate_smiles("F"), ObjectiveTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
  EXPECT_EQ(f.evaluate_smiles("C"), 1.25);
  EXPECT_EQ(f.children_started(), 2);
}

TEST_F(ExternalProcess, PoolServesConcurrentRequests) {
  auto f = std::make_shared<ExternalProcessObjective>(
      "sh " + script_, std::chrono::milliseconds(2000), 3);
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i)
    threads.emplace_back([&] {
      for (int k = 0; k < 10; ++k)
        ok += f->evaluate_smiles("CC") == 2.0;
    });
  for (auto &t : threads)
    t.join();
  EXPECT_EQ(ok.load(), 60);
  EXPECT_LE(f->children_started(), 3);
}

TEST(ExternalProcessDead, ReportsUnavailable) {
  ExternalProcessObjective quits("exit 0", std::chrono::milliseconds(500), 1);
  EXPECT_THROW(quits.evaluate_smiles("C"), ObjectiveUnavailable);
  ExternalProcessObjective missing("/nonexistent/evaluator",
                                   std::chrono::milliseconds(500), 1);
  EXPECT_THROW(missing.evaluate_smiles("C"), ObjectiveUnavailable);
}

} // namespace
} // namespace molbbo
