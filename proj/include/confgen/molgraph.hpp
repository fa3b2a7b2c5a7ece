#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace confgen {

using Vec3 = std::array<double, 3>;

// Per-atom boolean selector (1 = included). Shared by geometry and metrics.
using AtomMask = std::vector<std::uint8_t>;

namespace mol {

// Bond vocabulary. virtual2/virtual3 are the auxiliary edges added between
// atoms two and three hops apart; they only exist on expanded graphs.
enum class BondType : std::uint8_t {
  Single = 0,
  Double,
  Triple,
  Aromatic,
  Virtual2,
  Virtual3,
};

constexpr int kBondTypeCount = 6;

std::string_view to_string(BondType t);
std::optional<BondType> bond_type_from_string(std::string_view s);
inline bool is_virtual(BondType t) {
  return t == BondType::Virtual2 || t == BondType::Virtual3;
}

// Element vocabulary: {H, C, N, O, F, S, Cl} plus a catch-all bucket.
enum class Element : std::uint8_t { H = 0, C, N, O, F, S, Cl, Other };

constexpr int kElementVocabSize = 8;

Element element_from_symbol(std::string_view symbol);  // Other if unknown

struct AtomRecord {
  std::string symbol;  // as written in the input file
  Element element = Element::Other;
  bool is_heavy = true;  // element != H
};

struct EdgeRecord {
  int u = 0;
  int v = 0;
  BondType type = BondType::Single;
};

// Attributed atom-bond graph. Edges are kept in canonical order:
// sorted by (min(u,v), max(u,v), bond type), with u < v stored.
class MolecularGraph {
 public:
  std::string id;
  std::vector<AtomRecord> atoms;
  std::vector<EdgeRecord> edges;
  bool expanded = false;

  int atom_count() const { return static_cast<int>(atoms.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  int heavy_atom_count() const;

  // Throws ValidationError on any broken invariant: bad indices, u == v,
  // duplicate undirected edges, virtual edges on an unexpanded graph.
  void validate() const;

  void sort_edges();
};

AtomMask heavy_mask(const MolecularGraph& g);
AtomMask all_mask(int n);
int mask_count(const AtomMask& mask);

// Per-atom 3D coordinates in Angstrom, one row per atom.
struct Conformation {
  std::vector<Vec3> xyz;

  int atom_count() const { return static_cast<int>(xyz.size()); }
  void validate(int expected_atoms) const;  // size + finiteness
};

// One distance per expanded edge, in the graph's canonical edge order.
struct DistanceVector {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  // Data-boundary check: nonnegative, finite, length matches the graph.
  void validate(const MolecularGraph& g) const;
};

struct MoleculeRecord {
  MolecularGraph graph;
  std::vector<Conformation> conformers;
};

// Adds virtual2/virtual3 edges between all atom pairs at shortest-path
// distance 2 resp. 3 in the original bond graph (virtual edges never seed
// further expansion). Throws ValidationError if g is already expanded.
MolecularGraph expand_auxiliary_edges(const MolecularGraph& g);

// Euclidean distance per expanded edge; invariant under rigid motion of R.
DistanceVector distances_from_conformation(const MolecularGraph& g,
                                           const Conformation& R);

// JSON-lines ingestion. parse_dataset implements the strict contract (input
// must be unexpanded); read_dataset additionally accepts files produced by
// the ingest command, re-deriving and checking their expansion.
std::vector<MoleculeRecord> parse_dataset(const std::string& path);
std::vector<MoleculeRecord> read_dataset(const std::string& path);

std::vector<MoleculeRecord> parse_dataset_stream(std::istream& in,
                                                 const std::string& origin,
                                                 bool allow_expanded);

void write_dataset(std::ostream& out, const std::vector<MoleculeRecord>& mols);
void write_dataset(const std::string& path,
                   const std::vector<MoleculeRecord>& mols);

// Standard XYZ text: atom count, comment line, "El x y z" rows (6 decimals).
void write_xyz(std::ostream& out, const MolecularGraph& g,
               const Conformation& R, const std::string& comment);

}  // namespace mol
}  // namespace confgen
