//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_MOLGRAPH_H_
#define MOLBBO_MOLGRAPH_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace molbbo {

// Heavy atoms supported by the search space. Hydrogens are implicit.
enum class AtomType : std::uint8_t { C = 0, N = 1, O = 2, F = 3 };

inline constexpr std::array<AtomType, 4> kAllAtomTypes = {
    AtomType::C, AtomType::N, AtomType::O, AtomType::F};

inline constexpr int kDefaultHeavyAtomLimit = 9;
inline constexpr int kMaxBondOrder = 3;

constexpr int max_valence(AtomType t) {
  switch (t) {
  case AtomType::C:
    return 4;
  case AtomType::N:
    return 3;
  case AtomType::O:
    return 2;
  case AtomType::F:
    return 1;
  }
  return 0;
}

constexpr char atom_symbol(AtomType t) {
  constexpr std::array<char, 4> symbols = {'C', 'N', 'O', 'F'};
  return symbols[static_cast<int>(t)];
}

std::optional<AtomType> atom_from_symbol(char c);

class SmilesSyntaxError : public std::runtime_error {
public:
  SmilesSyntaxError(const std::string &what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

// Valence, connectivity, atom-cap or structural violation.
class ChemistryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Bond {
  int begin;
  int end;
  int order;

  friend bool operator==(const Bond &, const Bond &) = default;
};

struct Neighbor {
  int vertex;
  int order;
};

/// Connected, valence-valid graph of heavy atoms with single, double or
/// triple bonds. Construction validates everything except the heavy-atom
/// cap, which depends on the chemistry configuration (see validate()).
/// Instances are immutable.
class MolecularGraph {
public:
  MolecularGraph(std::vector<AtomType> atoms, std::vector<Bond> bonds);

  static MolecularGraph single_atom(AtomType t) { return {{t}, {}}; }

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }

  AtomType atom(int v) const { return atoms_[v]; }
  const std::vector<AtomType> &atoms() const { return atoms_; }

  // Bonds are stored with begin < end, in construction order.
  const std::vector<Bond> &bonds() const { return bonds_; }

  std::span<const Neighbor> neighbors(int v) const { return adjacency_[v]; }

  int degree(int v) const { return static_cast<int>(adjacency_[v].size()); }

  // 0 when u and v are not bonded.
  int bond_order(int u, int v) const;

  // Sum of incident bond orders.
  int bond_order_sum(int v) const { return valence_used_[v]; }

  // Returns a copy with vertex i moved to position perm[i].
  MolecularGraph relabeled(std::span<const int> perm) const;

private:
  std::vector<AtomType> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<int> valence_used_;
};

struct ChemistryRules {
  int heavy_atom_limit = kDefaultHeavyAtomLimit;
  std::vector<AtomType> atom_types{kAllAtomTypes.begin(), kAllAtomTypes.end()};

  bool allows(AtomType t) const;
};

/// maxValence(type(v)) minus the incident bond orders, i.e. the number of
/// implicit hydrogens. Throws std::out_of_range for a bad index.
int free_valence(const MolecularGraph &g, int v);

bool is_connected(int num_vertices, std::span<const Bond> bonds);

/// Returns a description of the first violated rule, or nullopt when the
/// graph is acceptable under `rules`.
std::optional<std::string> validate(const MolecularGraph &g,
                                    const ChemistryRules &rules = {});

/// Parses the supported SMILES subset: bare uppercase C, N, O, F atoms, bond
/// symbols - = #, branches and single-digit ring closures.
MolecularGraph parse_smiles(std::string_view text,
                            const ChemistryRules &rules = {});

/// Canonical SMILES of the graph. Reparses to an isomorphic graph.
std::string write_smiles(const MolecularGraph &g);

/// Writes SMILES with a DFS that starts at the lowest-ranked vertex and visits
/// neighbors in increasing rank. `rank` must be a permutation of vertices.
std::string write_smiles_ranked(const MolecularGraph &g,
                                std::span<const int> rank);

struct CanonicalKey {
  std::string text;

  friend auto operator<=>(const CanonicalKey &, const CanonicalKey &) = default;
};

struct CanonicalKeyHash {
  std::size_t operator()(const CanonicalKey &k) const noexcept {
    return std::hash<std::string>{}(k.text);
  }
};

/// Canonical vertex ranking (a permutation). Two isomorphic graphs get
/// rankings under which they coincide.
std::vector<int> canonical_ranking(const MolecularGraph &g);

CanonicalKey canonical_key(const MolecularGraph &g);

} // namespace molbbo

#endif // MOLBBO_MOLGRAPH_H_
