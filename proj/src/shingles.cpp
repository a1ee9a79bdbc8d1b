//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/shingles.h"

#include <algorithm>

namespace molbbo {

std::string ShingleKey::to_string() const {
  std::string out(1, atom_symbol(center));
  out += '|';
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (i)
      out += ',';
    out += static_cast<char>('0' + neighbors[i].first);
    out += ':';
    out += atom_symbol(neighbors[i].second);
  }
  return out;
}

ShingleKey ShingleKey::from_string(std::string_view text) {
  auto fail = [&] {
    return std::invalid_argument("malformed shingle '" + std::string(text) +
                                 "'");
  };
  if (text.size() < 2 || text[1] != '|')
    throw fail();
  auto center = atom_from_symbol(text[0]);
  if (!center)
    throw fail();
  ShingleKey key;
  key.center = *center;
  std::string_view rest = text.substr(2);
  while (!rest.empty()) {
    if (rest.size() < 3 || rest[1] != ':')
      throw fail();
    const int order = rest[0] - '0';
    auto type = atom_from_symbol(rest[2]);
    if (order < 1 || order > kMaxBondOrder || !type)
      throw fail();
    key.neighbors.emplace_back(order, *type);
    rest.remove_prefix(3);
    if (!rest.empty()) {
      if (rest[0] != ',' || rest.size() == 1)
        throw fail();
      rest.remove_prefix(1);
    }
  }
  if (!std::is_sorted(key.neighbors.begin(), key.neighbors.end()))
    throw fail();
  return key;
}

std::vector<ShingleKey> extract_shingles(const MolecularGraph &g) {
  std::vector<ShingleKey> out(g.num_atoms());
  for (int v = 0; v < g.num_atoms(); ++v) {
    out[v].center = g.atom(v);
    for (const Neighbor &nb : g.neighbors(v))
      out[v].neighbors.emplace_back(nb.order, g.atom(nb.vertex));
    std::sort(out[v].neighbors.begin(), out[v].neighbors.end());
  }
  return out;
}

ShingleDictionary::ShingleDictionary(int capacity) : capacity_(capacity) {
  if (capacity < 1)
    throw std::invalid_argument("shingle dictionary capacity must be >= 1");
}

int ShingleDictionary::find(const ShingleKey &key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1 : it->second;
}

int ShingleDictionary::insert(const ShingleKey &key) {
  if (int idx = find(key); idx >= 0)
    return idx;
  if (size() >= capacity_)
    throw DictionaryFull("shingle dictionary capacity " +
                         std::to_string(capacity_) + " exceeded by '" +
                         key.to_string() + "'");
  const int idx = size();
  keys_.push_back(key);
  index_.emplace(key, idx);
  return idx;
}

std::vector<std::string> ShingleDictionary::serialize() const {
  std::vector<std::string> out;
  out.reserve(keys_.size());
  for (const auto &k : keys_)
    out.push_back(k.to_string());
  return out;
}

ShingleDictionary
ShingleDictionary::deserialize(const std::vector<std::string> &items,
                               int capacity) {
  ShingleDictionary dict(capacity);
  for (const auto &s : items) {
    const ShingleKey key = ShingleKey::from_string(s);
    if (dict.find(key) >= 0)
      throw std::invalid_argument("duplicate shingle '" + s + "'");
    dict.insert(key);
  }
  return dict;
}

int ShingleVector::count(int column) const {
  auto it = std::lower_bound(
      entries.begin(), entries.end(), column,
      [](const std::pair<int, int> &e, int c) { return e.first < c; });
  return it != entries.end() && it->first == column ? it->second : 0;
}

int ShingleVector::total() const {
  int sum = 0;
  for (const auto &e : entries)
    sum += e.second;
  return sum;
}

std::vector<double> ShingleVector::dense(int length) const {
  std::vector<double> out(length, 0.0);
  for (const auto &[col, cnt] : entries)
    if (col < length)
      out[col] = cnt;
  return out;
}

namespace {

template <class Lookup>
Encoding encode_with(const MolecularGraph &g, int dimension, Lookup lookup) {
  Encoding enc;
  enc.vector.dimension = dimension;
  std::vector<int> columns;
  columns.reserve(g.num_atoms());
  for (const ShingleKey &key : extract_shingles(g)) {
    const int col = lookup(key);
    if (col < 0)
      ++enc.unseen;
    else
      columns.push_back(col);
  }
  std::sort(columns.begin(), columns.end());
  for (int c : columns) {
    if (!enc.vector.entries.empty() && enc.vector.entries.back().first == c)
      ++enc.vector.entries.back().second;
    else
      enc.vector.entries.emplace_back(c, 1);
  }
  return enc;
}

} // namespace

Encoding encode(const MolecularGraph &g, ShingleDictionary &dict,
                bool frozen) {
  if (frozen)
    return encode_frozen(g, dict);
  std::vector<ShingleKey> fresh;
  for (ShingleKey &k : extract_shingles(g))
    if (dict.find(k) < 0 &&
        std::find(fresh.begin(), fresh.end(), k) == fresh.end())
      fresh.push_back(std::move(k));
  if (dict.size() + static_cast<int>(fresh.size()) > dict.capacity())
    throw DictionaryFull("shingle dictionary capacity " +
                         std::to_string(dict.capacity()) + " exceeded by '" +
                         fresh.back().to_string() + "'");
  return encode_with(g, dict.capacity(),
                     [&](const ShingleKey &k) { return dict.insert(k); });
}

Encoding encode_frozen(const MolecularGraph &g, const ShingleDictionary &dict) {
  return encode_with(g, dict.capacity(),
                     [&](const ShingleKey &k) { return dict.find(k); });
}

} // namespace molbbo
