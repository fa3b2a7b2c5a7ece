#include "confgen/molgraph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "confgen/errors.hpp"

namespace confgen::mol {

namespace {

constexpr std::string_view kBondNames[kBondTypeCount] = {
    "single", "double", "triple", "aromatic", "virtual2", "virtual3"};

}  // namespace

std::string_view to_string(BondType t) {
  return kBondNames[static_cast<int>(t)];
}

std::optional<BondType> bond_type_from_string(std::string_view s) {
  for (int i = 0; i < kBondTypeCount; ++i) {
    if (kBondNames[i] == s) return static_cast<BondType>(i);
  }
  return std::nullopt;
}

Element element_from_symbol(std::string_view symbol) {
  if (symbol == "H") return Element::H;
  if (symbol == "C") return Element::C;
  if (symbol == "N") return Element::N;
  if (symbol == "O") return Element::O;
  if (symbol == "F") return Element::F;
  if (symbol == "S") return Element::S;
  if (symbol == "Cl") return Element::Cl;
  return Element::Other;
}

int MolecularGraph::heavy_atom_count() const {
  int k = 0;
  for (const auto& a : atoms)
    if (a.is_heavy) ++k;
  return k;
}

void MolecularGraph::sort_edges() {
  for (auto& e : edges) {
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeRecord& a, const EdgeRecord& b) {
              if (a.u != b.u) return a.u < b.u;
              if (a.v != b.v) return a.v < b.v;
              return static_cast<int>(a.type) < static_cast<int>(b.type);
            });
}

void MolecularGraph::validate() const {
  const int n = atom_count();
  std::set<std::pair<int, int>> seen;
  for (const auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
      throw ValidationError("molecule '" + id + "': edge (" +
                            std::to_string(e.u) + "," + std::to_string(e.v) +
                            ") references an invalid atom index");
    }
    if (e.u == e.v) {
      throw ValidationError("molecule '" + id + "': self-edge on atom " +
                            std::to_string(e.u));
    }
    auto key = std::minmax(e.u, e.v);
    if (!seen.insert(key).second) {
      throw ValidationError("molecule '" + id + "': duplicate edge (" +
                            std::to_string(key.first) + "," +
                            std::to_string(key.second) + ")");
    }
    if (is_virtual(e.type) && !expanded) {
      throw ValidationError("molecule '" + id +
                            "': virtual edge on an unexpanded graph");
    }
  }
}

AtomMask heavy_mask(const MolecularGraph& g) {
  AtomMask m(g.atoms.size(), 0);
  for (std::size_t i = 0; i < g.atoms.size(); ++i) m[i] = g.atoms[i].is_heavy;
  return m;
}

AtomMask all_mask(int n) { return AtomMask(static_cast<std::size_t>(n), 1); }

int mask_count(const AtomMask& mask) {
  int k = 0;
  for (auto b : mask) k += (b != 0);
  return k;
}

void Conformation::validate(int expected_atoms) const {
  if (atom_count() != expected_atoms) {
    throw ValidationError("conformation has " + std::to_string(atom_count()) +
                          " atoms, expected " + std::to_string(expected_atoms));
  }
  for (const auto& r : xyz) {
    for (double c : r) {
      if (!std::isfinite(c))
        throw ValidationError("conformation contains a non-finite coordinate");
    }
  }
}

void DistanceVector::validate(const MolecularGraph& g) const {
  if (size() != g.edge_count()) {
    throw ValidationError("distance vector length " + std::to_string(size()) +
                          " does not match edge count " +
                          std::to_string(g.edge_count()));
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("distance vector contains a negative or "
                            "non-finite entry");
  }
}

MolecularGraph expand_auxiliary_edges(const MolecularGraph& g) {
  if (g.expanded)
    throw ValidationError("molecule '" + g.id + "' is already expanded");
  g.validate();

  const int n = g.atom_count();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : g.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }

  MolecularGraph out = g;
  out.expanded = true;

  // BFS to depth 3 from every atom; multi-hop distance is measured on the
  // original bond graph only.
  std::vector<int> dist(n);
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::deque<int> q{s};
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      if (dist[u] == 3) continue;
      for (int v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push_back(v);
        }
      }
    }
    for (int v = s + 1; v < n; ++v) {
      if (dist[v] == 2)
        out.edges.push_back({s, v, BondType::Virtual2});
      else if (dist[v] == 3)
        out.edges.push_back({s, v, BondType::Virtual3});
    }
  }

  out.sort_edges();
  out.validate();
  return out;
}

DistanceVector distances_from_conformation(const MolecularGraph& g,
                                           const Conformation& R) {
  if (!g.expanded)
    throw ValidationError("distances_from_conformation requires an expanded "
                          "graph");
  R.validate(g.atom_count());
  DistanceVector d;
  d.values.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    const Vec3& a = R.xyz[e.u];
    const Vec3& b = R.xyz[e.v];
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    d.values.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return d;
}

namespace {

using nlohmann::json;

MoleculeRecord record_from_json(const json& j, const std::string& where,
                                bool allow_expanded) {
  MoleculeRecord rec;
  MolecularGraph& g = rec.graph;

  if (!j.is_object()) throw ParseError(where + ": record is not an object");
  g.id = j.value("id", std::string{});

  if (!j.contains("atoms") || !j["atoms"].is_array())
    throw ParseError(where + ": missing or invalid 'atoms'");
  for (const auto& a : j["atoms"]) {
    if (!a.is_string()) throw ParseError(where + ": atom entry is not a string");
    AtomRecord atom;
    atom.symbol = a.get<std::string>();
    atom.element = element_from_symbol(atom.symbol);
    if (atom.element == Element::Other && atom.symbol != "H") {
      std::cerr << "[warn] " << where << ": unknown element '" << atom.symbol
                << "' mapped to OTHER\n";
    }
    atom.is_heavy = atom.element != Element::H;
    g.atoms.push_back(std::move(atom));
  }

  g.expanded = j.value("expanded", false);
  if (g.expanded && !allow_expanded)
    throw ParseError(where + ": input is already expanded");

  if (!j.contains("bonds") || !j["bonds"].is_array())
    throw ParseError(where + ": missing or invalid 'bonds'");
  for (const auto& b : j["bonds"]) {
    if (!b.is_array() || b.size() != 3 || !b[0].is_number_integer() ||
        !b[1].is_number_integer() || !b[2].is_string())
      throw ParseError(where + ": bond entry must be [u, v, \"type\"]");
    EdgeRecord e;
    e.u = b[0].get<int>();
    e.v = b[1].get<int>();
    const auto t = bond_type_from_string(b[2].get<std::string>());
    if (!t)
      throw ParseError(where + ": unknown bond type '" +
                       b[2].get<std::string>() + "'");
    e.type = *t;
    if (is_virtual(e.type) && !g.expanded)
      throw ParseError(where + ": virtual bond in an unexpanded record");
    g.edges.push_back(e);
  }
  g.sort_edges();

  try {
    g.validate();
  } catch (const ValidationError& err) {
    throw ValidationError(where + ": " + err.what());
  }

  // A stored expanded graph must match what expansion of its own real bonds
  // produces, so downstream code can trust the edge order and labels.
  if (g.expanded) {
    MolecularGraph base = g;
    base.expanded = false;
    base.edges.clear();
    for (const auto& e : g.edges)
      if (!is_virtual(e.type)) base.edges.push_back(e);
    MolecularGraph redone = expand_auxiliary_edges(base);
    bool same = redone.edges.size() == g.edges.size();
    for (std::size_t i = 0; same && i < g.edges.size(); ++i) {
      same = redone.edges[i].u == g.edges[i].u &&
             redone.edges[i].v == g.edges[i].v &&
             redone.edges[i].type == g.edges[i].type;
    }
    if (!same)
      throw ValidationError(where +
                            ": stored expansion disagrees with the expansion "
                            "derived from its bonds");
  }

  if (j.contains("conformers")) {
    if (!j["conformers"].is_array())
      throw ParseError(where + ": 'conformers' must be an array");
    for (const auto& c : j["conformers"]) {
      Conformation conf;
      if (!c.is_array()) throw ParseError(where + ": conformer is not an array");
      for (const auto& row : c) {
        if (!row.is_array() || row.size() != 3)
          throw ParseError(where + ": coordinate row must be [x, y, z]");
        conf.xyz.push_back({row[0].get<double>(), row[1].get<double>(),
                            row[2].get<double>()});
      }
      try {
        conf.validate(g.atom_count());
      } catch (const ValidationError& err) {
        throw ValidationError(where + ": " + err.what());
      }
      rec.conformers.push_back(std::move(conf));
    }
  }
  return rec;
}

}  // namespace

std::vector<MoleculeRecord> parse_dataset_stream(std::istream& in,
                                                 const std::string& origin,
                                                 bool allow_expanded) {
  std::vector<MoleculeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    out.push_back(record_from_json(j, where, allow_expanded));
  }
  return out;
}

namespace {

std::vector<MoleculeRecord> read_file(const std::string& path,
                                      bool allow_expanded) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  return parse_dataset_stream(in, path, allow_expanded);
}

}  // namespace

std::vector<MoleculeRecord> parse_dataset(const std::string& path) {
  return read_file(path, /*allow_expanded=*/false);
}

std::vector<MoleculeRecord> read_dataset(const std::string& path) {
  return read_file(path, /*allow_expanded=*/true);
}

void write_dataset(std::ostream& out, const std::vector<MoleculeRecord>& mols) {
  for (const auto& rec : mols) {
    nlohmann::json j;
    j["id"] = rec.graph.id;
    auto atoms = nlohmann::json::array();
    for (const auto& a : rec.graph.atoms) atoms.push_back(a.symbol);
    j["atoms"] = std::move(atoms);
    auto bonds = nlohmann::json::array();
    for (const auto& e : rec.graph.edges)
      bonds.push_back({e.u, e.v, std::string(to_string(e.type))});
    j["bonds"] = std::move(bonds);
    if (rec.graph.expanded) j["expanded"] = true;
    auto confs = nlohmann::json::array();
    for (const auto& c : rec.conformers) {
      auto rows = nlohmann::json::array();
      for (const auto& r : c.xyz) rows.push_back({r[0], r[1], r[2]});
      confs.push_back(std::move(rows));
    }
    j["conformers"] = std::move(confs);
    out << j.dump() << "\n";
  }
}

void write_dataset(const std::string& path,
                   const std::vector<MoleculeRecord>& mols) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  write_dataset(out, mols);
}

void write_xyz(std::ostream& out, const MolecularGraph& g,
               const Conformation& R, const std::string& comment) {
  R.validate(g.atom_count());
  out << g.atom_count() << "\n" << comment << "\n";
  char buf[128];
  for (int i = 0; i < g.atom_count(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f",
                  g.atoms[i].symbol.c_str(), R.xyz[i][0], R.xyz[i][1],
                  R.xyz[i][2]);
    out << buf << "\n";
  }
}

}  // namespace confgen::mol
