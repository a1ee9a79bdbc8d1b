//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_SHINGLES_H_
#define MOLBBO_SHINGLES_H_

#include <compare>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molbbo/molgraph.h"

namespace molbbo {

// Radius-1 environment of an atom: its type plus the multiset of
// (bond order, neighbor type) over incident bonds.
struct ShingleKey {
  AtomType center = AtomType::C;
  std::vector<std::pair<int, AtomType>> neighbors; // sorted

  friend auto operator<=>(const ShingleKey &, const ShingleKey &) = default;
  friend bool operator==(const ShingleKey &, const ShingleKey &) = default;

  // "center|order:neighbor,order:neighbor,...", e.g. "C|1:C,2:O".
  std::string to_string() const;
  static ShingleKey from_string(std::string_view text);
};

// One shingle per vertex, in vertex order.
std::vector<ShingleKey> extract_shingles(const MolecularGraph &g);

class DictionaryFull : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultShingleCapacity = 2000;

/// Dense first-seen-order index of shingles. Indices are never reassigned.
class ShingleDictionary {
public:
  explicit ShingleDictionary(int capacity = kDefaultShingleCapacity);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(keys_.size()); }

  // -1 when unknown.
  int find(const ShingleKey &key) const;

  // Returns the existing index or appends. Throws DictionaryFull.
  int insert(const ShingleKey &key);

  const std::vector<ShingleKey> &keys() const { return keys_; }

  std::vector<std::string> serialize() const;
  static ShingleDictionary deserialize(const std::vector<std::string> &items,
                                       int capacity);

  friend bool operator==(const ShingleDictionary &a,
                         const ShingleDictionary &b) {
    return a.capacity_ == b.capacity_ && a.keys_ == b.keys_;
  }

private:
  int capacity_;
  std::vector<ShingleKey> keys_;
  std::map<ShingleKey, int> index_;
};

/// Count vector of logical length `dimension` (the dictionary capacity),
/// stored sparsely as (column, count) pairs sorted by column.
struct ShingleVector {
  int dimension = 0;
  std::vector<std::pair<int, int>> entries;

  int count(int column) const;
  int total() const;
  std::vector<double> dense(int length) const;

  friend bool operator==(const ShingleVector &, const ShingleVector &) =
      default;
};

struct Encoding {
  ShingleVector vector;
  int unseen = 0; // shingles dropped because the dictionary was frozen
};

/// Counts shingles of `g` into dictionary columns. With `frozen`, unknown
/// shingles are dropped and tallied; otherwise they are appended.
Encoding encode(const MolecularGraph &g, ShingleDictionary &dict, bool frozen);

// Read-only frozen encoding; safe for concurrent use.
Encoding encode_frozen(const MolecularGraph &g, const ShingleDictionary &dict);

} // namespace molbbo

#endif // MOLBBO_SHINGLES_H_
