//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/shingles.h"

#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace molbbo {
namespace {

std::map<std::string, int> shingle_counts(const std::string &smiles) {
  std::map<std::string, int> counts;
  for (const ShingleKey &k : extract_shingles(parse_smiles(smiles)))
    ++counts[k.to_string()];
  return counts;
}

TEST(ExtractShingles, Examples) {
  EXPECT_EQ(shingle_counts("C"), (std::map<std::string, int>{{"C|", 1}}));
  EXPECT_EQ(shingle_counts("CC"), (std::map<std::string, int>{{"C|1:C", 2}}));
  EXPECT_EQ(shingle_counts("CCO"),
            (std::map<std::string, int>{
                {"C|1:C", 1}, {"C|1:C,1:O", 1}, {"O|1:C", 1}}));
  EXPECT_EQ(shingle_counts("OC(=O)C#N"),
            (std::map<std::string, int>{{"O|1:C", 1},
                                        {"O|2:C", 1},
                                        {"C|1:C,1:O,2:O", 1},
                                        {"C|1:C,3:N", 1},
                                        {"N|3:C", 1}}));
}

TEST(ShingleKey, StringRoundTrip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i)
    for (const ShingleKey &k :
         extract_shingles(testing::random_graph(rng, 1, 9)))
      ASSERT_EQ(ShingleKey::from_string(k.to_string()), k);
  EXPECT_THROW(ShingleKey::from_string("X|"), std::invalid_argument);
  EXPECT_THROW(ShingleKey::from_string("C|4:C"), std::invalid_argument);
  EXPECT_THROW(ShingleKey::from_string("C1:C"), std::invalid_argument);
  EXPECT_THROW(ShingleKey::from_string("C|2:O,1:C"), std::invalid_argument);
}

TEST(Encode, MethaneIntoEmptyDictionary) {
  ShingleDictionary dict;
  const Encoding e = encode(parse_smiles("C"), dict, false);
  EXPECT_EQ(dict.size(), 1);
  EXPECT_EQ(e.vector.dimension, 2000);
  EXPECT_EQ(e.vector.count(0), 1);
  EXPECT_EQ(e.vector.total(), 1);
  EXPECT_EQ(e.unseen, 0);
  const auto dense = e.vector.dense(2000);
  EXPECT_EQ(std::count(dense.begin(), dense.end(), 0.0), 1999);
}

TEST(Encode, Idempotent) {
  ShingleDictionary dict;
  const MolecularGraph g = parse_smiles("CC(N)O");
  const Encoding a = encode(g, dict, false);
  const ShingleDictionary snapshot = dict;
  const Encoding b = encode(g, dict, false);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_EQ(dict, snapshot);
}

TEST(Encode, FirstSeenOrder) {
  ShingleDictionary dict;
  encode(parse_smiles("C"), dict, false);
  const Encoding e = encode(parse_smiles("CCO"), dict, false);
  ASSERT_EQ(dict.size(), 4);
  EXPECT_EQ(e.vector.count(0), 0);
  for (int col = 1; col <= 3; ++col)
    EXPECT_EQ(e.vector.count(col), 1);
  // Vertex order of "CCO": the terminal C is seen first.
  EXPECT_EQ(dict.keys()[1].to_string(), "C|1:C");
  EXPECT_EQ(dict.keys()[2].to_string(), "C|1:C,1:O");
  EXPECT_EQ(dict.keys()[3].to_string(), "O|1:C");
}

TEST(Encode, FrozenDropsUnknown) {
  ShingleDictionary dict;
  encode(parse_smiles("CC"), dict, false);
  const Encoding e = encode(parse_smiles("CCO"), dict, true);
  EXPECT_EQ(dict.size(), 1);
  EXPECT_EQ(e.unseen, 2);
  EXPECT_EQ(e.vector.count(0), 1);
  EXPECT_EQ(e.vector.total(), 1);
  const Encoding same = encode_frozen(parse_smiles("CCO"), dict);
  EXPECT_EQ(same.vector, e.vector);
  EXPECT_EQ(same.unseen, 2);
}

TEST(Encode, CapacityExceededLeavesDictionaryUnchanged) {
  ShingleDictionary dict(2);
  encode(parse_smiles("C"), dict, false);
  EXPECT_THROW(encode(parse_smiles("CCO"), dict, false), DictionaryFull);
  EXPECT_EQ(dict.size(), 1);
  EXPECT_NO_THROW(encode(parse_smiles("CC"), dict, false));
  EXPECT_EQ(dict.size(), 2);
}

TEST(Encode, PermutationInvarianceAndCounts) {
  std::mt19937_64 rng(4);
  ShingleDictionary dict;
  for (int i = 0; i < 200; ++i) {
    const MolecularGraph g = testing::random_graph(rng, 1, 9);
    const ShingleVector v = encode(g, dict, false).vector;
    EXPECT_EQ(v.total(), g.num_atoms());
    for (int k = 0; k < 5; ++k) {
      const auto perm = testing::random_permutation(rng, g.num_atoms());
      ASSERT_EQ(encode(g.relabeled(perm), dict, false).vector, v);
    }
  }
}

TEST(Encode, DeterministicDictionaries) {
  auto build = [] {
    std::mt19937_64 rng(9);
    ShingleDictionary dict;
    std::vector<ShingleVector> vs;
    for (int i = 0; i < 100; ++i)
      vs.push_back(encode(testing::random_graph(rng, 1, 9), dict, false).vector);
    return std::make_pair(dict, vs);
  };
  EXPECT_EQ(build(), build());
}

TEST(ShingleDictionary, SerializeRoundTrip) {
  ShingleDictionary dict;
  encode(parse_smiles("CC(=O)OC#N"), dict, false);
  const auto items = dict.serialize();
  EXPECT_EQ(ShingleDictionary::deserialize(items, dict.capacity()), dict);
  EXPECT_THROW(ShingleDictionary::deserialize({"C|", "C|"}, 10),
               std::invalid_argument);
  EXPECT_THROW(ShingleDictionary::deserialize({"C|", "O|"}, 1), DictionaryFull);
}

} // namespace
} // namespace molbbo
