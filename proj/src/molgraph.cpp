//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/molgraph.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>
#include <utility>

namespace molbbo {

std::optional<AtomType> atom_from_symbol(char c) {
  switch (c) {
  case 'C':
    return AtomType::C;
  case 'N':
    return AtomType::N;
  case 'O':
    return AtomType::O;
  case 'F':
    return AtomType::F;
  default:
    return std::nullopt;
  }
}

bool is_connected(int num_vertices, std::span<const Bond> bonds) {
  if (num_vertices <= 0)
    return false;
  std::vector<int> parent(num_vertices);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  int components = num_vertices;
  for (const Bond &b : bonds) {
    int ra = find(b.begin), rb = find(b.end);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

MolecularGraph::MolecularGraph(std::vector<AtomType> atoms,
                               std::vector<Bond> bonds)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)) {
  const int n = num_atoms();
  if (n == 0)
    throw ChemistryError("empty molecular graph");

  adjacency_.resize(n);
  valence_used_.assign(n, 0);
  for (Bond &b : bonds_) {
    if (b.begin < 0 || b.begin >= n || b.end < 0 || b.end >= n)
      throw ChemistryError("bond references a missing atom");
    if (b.begin == b.end)
      throw ChemistryError("self-loop bond on atom " + std::to_string(b.begin));
    if (b.order < 1 || b.order > kMaxBondOrder)
      throw ChemistryError("bond order " + std::to_string(b.order) +
                           " is not 1, 2 or 3");
    if (b.begin > b.end)
      std::swap(b.begin, b.end);
    for (const Neighbor &nb : adjacency_[b.begin])
      if (nb.vertex == b.end)
        throw ChemistryError("parallel bonds between atoms " +
                             std::to_string(b.begin) + " and " +
                             std::to_string(b.end));
    adjacency_[b.begin].push_back({b.end, b.order});
    adjacency_[b.end].push_back({b.begin, b.order});
    valence_used_[b.begin] += b.order;
    valence_used_[b.end] += b.order;
  }

  for (int v = 0; v < n; ++v) {
    if (valence_used_[v] > max_valence(atoms_[v]))
      throw ChemistryError(std::string("valence exceeded on atom ") +
                           std::to_string(v) + " (" + atom_symbol(atoms_[v]) +
                           ", bond order sum " +
                           std::to_string(valence_used_[v]) + ")");
  }
  if (!is_connected(n, bonds_))
    throw ChemistryError("molecular graph is disconnected");
}

int MolecularGraph::bond_order(int u, int v) const {
  for (const Neighbor &nb : adjacency_[u])
    if (nb.vertex == v)
      return nb.order;
  return 0;
}

MolecularGraph MolecularGraph::relabeled(std::span<const int> perm) const {
  const int n = num_atoms();
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument("permutation size does not match atom count");
  std::vector<char> seen(n, 0);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p])
      throw std::invalid_argument("not a permutation");
    seen[p] = 1;
  }
  std::vector<AtomType> atoms(n);
  for (int i = 0; i < n; ++i)
    atoms[perm[i]] = atoms_[i];
  std::vector<Bond> bonds;
  bonds.reserve(bonds_.size());
  for (const Bond &b : bonds_)
    bonds.push_back({perm[b.begin], perm[b.end], b.order});
  return {std::move(atoms), std::move(bonds)};
}

int free_valence(const MolecularGraph &g, int v) {
  if (v < 0 || v >= g.num_atoms())
    throw std::out_of_range("atom index " + std::to_string(v) +
                            " out of range");
  return max_valence(g.atom(v)) - g.bond_order_sum(v);
}

bool ChemistryRules::allows(AtomType t) const {
  return std::find(atom_types.begin(), atom_types.end(), t) != atom_types.end();
}

std::optional<std::string> validate(const MolecularGraph &g,
                                    const ChemistryRules &rules) {
  for (int v = 0; v < g.num_atoms(); ++v)
    if (!rules.allows(g.atom(v)))
      return std::string("atom type ") + atom_symbol(g.atom(v)) +
             " not allowed";
  if (g.num_atoms() > rules.heavy_atom_limit)
    return "heavy atom count " + std::to_string(g.num_atoms()) +
           " exceeds limit " + std::to_string(rules.heavy_atom_limit);
  for (int v = 0; v < g.num_atoms(); ++v)
    if (free_valence(g, v) < 0)
      return "valence exceeded on atom " + std::to_string(v);
  if (!is_connected(g.num_atoms(), g.bonds()))
    return std::string("disconnected");
  return std::nullopt;
}

// -- SMILES reading ---------------------------------------------------------

namespace {

int bond_symbol_order(char c) {
  switch (c) {
  case '-':
    return 1;
  case '=':
    return 2;
  case '#':
    return 3;
  default:
    return 0;
  }
}

struct OpenRing {
  int atom = -1;
  int order = 0;
};

} // namespace

MolecularGraph parse_smiles(std::string_view text, const ChemistryRules &rules) {
  std::vector<AtomType> atoms;
  std::vector<Bond> bonds;
  std::vector<int> branch_stack;
  std::array<OpenRing, 10> rings;
  int prev = -1;
  int pending_bond = 0;
  bool branch_empty = false;

  auto bonded = [&](int a, int b) {
    return std::any_of(bonds.begin(), bonds.end(), [&](const Bond &x) {
      return (x.begin == a && x.end == b) || (x.begin == b && x.end == a);
    });
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (auto type = atom_from_symbol(c)) {
      if (i + 1 < text.size() && text[i + 1] >= 'a' && text[i + 1] <= 'z')
        throw SmilesSyntaxError(
            std::string("unsupported atom '") + c + text[i + 1] + "'", i);
      const int idx = static_cast<int>(atoms.size());
      atoms.push_back(*type);
      if (prev >= 0)
        bonds.push_back({prev, idx, pending_bond ? pending_bond : 1});
      else if (pending_bond)
        throw SmilesSyntaxError("bond symbol without a preceding atom", i);
      prev = idx;
      pending_bond = 0;
      branch_empty = false;
    } else if (int order = bond_symbol_order(c)) {
      if (prev < 0)
        throw SmilesSyntaxError("bond symbol without a preceding atom", i);
      if (pending_bond)
        throw SmilesSyntaxError("consecutive bond symbols", i);
      pending_bond = order;
    } else if (c == '(') {
      if (prev < 0)
        throw SmilesSyntaxError("branch without a preceding atom", i);
      if (pending_bond)
        throw SmilesSyntaxError("bond symbol before '('", i);
      branch_stack.push_back(prev);
      branch_empty = true;
    } else if (c == ')') {
      if (branch_stack.empty())
        throw SmilesSyntaxError("unbalanced parenthesis", i);
      if (pending_bond)
        throw SmilesSyntaxError("dangling bond symbol", i);
      if (branch_empty)
        throw SmilesSyntaxError("empty branch", i);
      prev = branch_stack.back();
      branch_stack.pop_back();
    } else if (c >= '0' && c <= '9') {
      if (prev < 0)
        throw SmilesSyntaxError("ring closure without a preceding atom", i);
      OpenRing &ring = rings[c - '0'];
      if (ring.atom < 0) {
        ring = {prev, pending_bond};
      } else {
        if (ring.order && pending_bond && ring.order != pending_bond)
          throw SmilesSyntaxError("conflicting ring-closure bond orders", i);
        const int order =
            pending_bond ? pending_bond : (ring.order ? ring.order : 1);
        if (ring.atom == prev)
          throw SmilesSyntaxError("ring closure onto the same atom", i);
        if (bonded(ring.atom, prev))
          throw SmilesSyntaxError("ring closure duplicates an existing bond",
                                  i);
        bonds.push_back({ring.atom, prev, order});
        ring = {};
      }
      pending_bond = 0;
    } else {
      throw SmilesSyntaxError(std::string("unknown token '") + c + "'", i);
    }
  }

  if (pending_bond)
    throw SmilesSyntaxError("dangling bond symbol", text.size());
  if (!branch_stack.empty())
    throw SmilesSyntaxError("unbalanced parenthesis", text.size());
  for (std::size_t d = 0; d < rings.size(); ++d)
    if (rings[d].atom >= 0)
      throw SmilesSyntaxError("dangling ring-closure digit " +
                                  std::to_string(d),
                              text.size());
  if (atoms.empty())
    throw SmilesSyntaxError("empty SMILES", 0);
  if (static_cast<int>(atoms.size()) > rules.heavy_atom_limit)
    throw ChemistryError("heavy atom count " + std::to_string(atoms.size()) +
                         " exceeds limit " +
                         std::to_string(rules.heavy_atom_limit));
  for (AtomType t : atoms)
    if (!rules.allows(t))
      throw ChemistryError(std::string("atom type ") + atom_symbol(t) +
                           " is not allowed");

  return {std::move(atoms), std::move(bonds)};
}

// -- SMILES writing ---------------------------------------------------------

namespace {

const char *bond_symbol(int order) {
  switch (order) {
  case 2:
    return "=";
  case 3:
    return "#";
  default:
    return "";
  }
}

struct DfsPlan {
  std::vector<std::vector<int>> children;     // tree children in visit order
  std::vector<std::vector<int>> ring_opens;   // partners closing later
  std::vector<std::vector<int>> ring_closes;  // partners opened earlier
  std::vector<int> order;                     // preorder
};

class SmilesWriter {
public:
  SmilesWriter(const MolecularGraph &g, std::span<const int> rank)
      : g_(g), rank_(rank) {
    const int n = g.num_atoms();
    plan_.children.resize(n);
    plan_.ring_opens.resize(n);
    plan_.ring_closes.resize(n);
    sorted_neighbors_.resize(n);
    for (int v = 0; v < n; ++v) {
      for (const Neighbor &nb : g.neighbors(v))
        sorted_neighbors_[v].push_back(nb.vertex);
      std::sort(sorted_neighbors_[v].begin(), sorted_neighbors_[v].end(),
                [&](int a, int b) { return rank_[a] < rank_[b]; });
    }
  }

  std::string write() {
    const int n = g_.num_atoms();
    int root = 0;
    for (int v = 1; v < n; ++v)
      if (rank_[v] < rank_[root])
        root = v;
    visited_.assign(n, 0);
    plan(root, -1);
    emit(root, -1);
    return out_;
  }

private:
  void plan(int v, int parent) {
    visited_[v] = 1;
    for (int u : sorted_neighbors_[v]) {
      if (u == parent)
        continue;
      if (visited_[u] == 1) {
        // u is an ancestor still on the stack: back edge.
        plan_.ring_opens[u].push_back(v);
        plan_.ring_closes[v].push_back(u);
      } else if (visited_[u] == 0) {
        plan_.children[v].push_back(u);
        plan(u, v);
      }
    }
    visited_[v] = 2;
  }

  int take_digit() {
    // 1..9 first, then 0.
    for (int k = 0; k < 10; ++k) {
      const int d = (k + 1) % 10;
      if (!digit_in_use_[d]) {
        digit_in_use_[d] = true;
        return d;
      }
    }
    throw ChemistryError("more than 10 simultaneously open ring closures");
  }

  void emit(int v, int parent) {
    out_ += atom_symbol(g_.atom(v));
    for (int u : plan_.ring_closes[v]) {
      const int d = ring_digit_.at(std::minmax(u, v));
      out_ += static_cast<char>('0' + d);
      digit_in_use_[d] = false;
    }
    for (int u : plan_.ring_opens[v]) {
      const int d = take_digit();
      ring_digit_[std::minmax(u, v)] = d;
      out_ += bond_symbol(g_.bond_order(u, v));
      out_ += static_cast<char>('0' + d);
    }
    const auto &kids = plan_.children[v];
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const bool branch = i + 1 < kids.size();
      if (branch)
        out_ += '(';
      out_ += bond_symbol(g_.bond_order(v, kids[i]));
      emit(kids[i], v);
      if (branch)
        out_ += ')';
    }
    (void)parent;
  }

  const MolecularGraph &g_;
  std::span<const int> rank_;
  std::vector<std::vector<int>> sorted_neighbors_;
  std::vector<char> visited_;
  DfsPlan plan_;
  std::map<std::pair<int, int>, int> ring_digit_;
  std::array<bool, 10> digit_in_use_{};
  std::string out_;
};

} // namespace

std::string write_smiles_ranked(const MolecularGraph &g,
                                std::span<const int> rank) {
  if (static_cast<int>(rank.size()) != g.num_atoms())
    throw std::invalid_argument("rank size does not match atom count");
  return SmilesWriter(g, rank).write();
}

// -- Canonical ranking --------------------------------------------------------

namespace {

// Replaces colors with dense ranks of the given per-vertex signatures.
template <class Sig>
int rank_signatures(const std::vector<Sig> &sigs, std::vector<int> &colors) {
  std::vector<Sig> sorted = sigs;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (std::size_t v = 0; v < sigs.size(); ++v)
    colors[v] = static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), sigs[v]) -
        sorted.begin());
  return static_cast<int>(sorted.size());
}

int count_classes(const std::vector<int> &colors) {
  std::vector<int> c = colors;
  std::sort(c.begin(), c.end());
  return static_cast<int>(std::unique(c.begin(), c.end()) - c.begin());
}

// Neighborhood refinement until the partition is stable. Class order is a
// function of signatures only, so it commutes with vertex relabeling.
void refine(const MolecularGraph &g, std::vector<int> &colors) {
  const int n = g.num_atoms();
  using Sig = std::pair<int, std::vector<std::pair<int, int>>>;
  int classes = count_classes(colors);
  std::vector<Sig> sigs(n);
  while (true) {
    for (int v = 0; v < n; ++v) {
      sigs[v].first = colors[v];
      auto &nbrs = sigs[v].second;
      nbrs.clear();
      for (const Neighbor &nb : g.neighbors(v))
        nbrs.emplace_back(nb.order, colors[nb.vertex]);
      std::sort(nbrs.begin(), nbrs.end());
    }
    const int next = rank_signatures(sigs, colors);
    if (next == classes)
      return;
    classes = next;
  }
}

class CanonicalSearch {
public:
  explicit CanonicalSearch(const MolecularGraph &g) : g_(g) {}

  void run() {
    const int n = g_.num_atoms();
    using Sig = std::tuple<int, int, std::vector<int>>;
    std::vector<Sig> sigs(n);
    for (int v = 0; v < n; ++v) {
      std::vector<int> orders;
      for (const Neighbor &nb : g_.neighbors(v))
        orders.push_back(nb.order);
      std::sort(orders.begin(), orders.end());
      sigs[v] = {static_cast<int>(g_.atom(v)), g_.degree(v),
                 std::move(orders)};
    }
    std::vector<int> colors(n);
    rank_signatures(sigs, colors);
    refine(g_, colors);
    search(colors);
  }

  std::string best_smiles;
  std::vector<int> best_rank;

private:
  void search(std::vector<int> &colors) {
    const int n = g_.num_atoms();
    std::vector<int> cell_size(n, 0);
    for (int c : colors)
      ++cell_size[c];
    int target = -1;
    for (int c = 0; c < n; ++c)
      if (cell_size[c] > 1) {
        target = c;
        break;
      }
    if (target < 0) {
      std::string smiles = write_smiles_ranked(g_, colors);
      if (best_rank.empty() || smiles < best_smiles) {
        best_smiles = std::move(smiles);
        best_rank = colors;
      }
      return;
    }
    for (int v = 0; v < n; ++v) {
      if (colors[v] != target)
        continue;
      std::vector<int> next(n);
      for (int w = 0; w < n; ++w)
        next[w] = 2 * colors[w] + (colors[w] == target && w != v ? 1 : 0);
      std::vector<int> dense(n);
      rank_signatures(next, dense);
      refine(g_, dense);
      search(dense);
    }
  }

  const MolecularGraph &g_;
};

} // namespace

std::vector<int> canonical_ranking(const MolecularGraph &g) {
  CanonicalSearch search(g);
  search.run();
  return search.best_rank;
}

std::string write_smiles(const MolecularGraph &g) {
  CanonicalSearch search(g);
  search.run();
  return search.best_smiles;
}

CanonicalKey canonical_key(const MolecularGraph &g) {
  return {write_smiles(g)};
}

} // namespace molbbo
