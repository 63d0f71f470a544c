#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "bfn/chem/elements.hpp"
#include "bfn/chem/errors.hpp"
#include "bfn/chem/mol_graph.hpp"

namespace bfn::chem {

namespace detail {

inline int explicit_valence(const MolGraph& g, int i) {
  const Atom& a = g.atom(i);
  return g.sigma_valence(i) + (a.bracket ? a.hydrogens : 0);
}

}  // namespace detail

/// True when an aromatic atom must take one double bond in a Kekulé form.
/// Aromatic bonds count as single; the atom needs a pi bond when its lowest
/// admissible valence leaves at least one free slot.
inline bool needs_pi_bond(const MolGraph& g, int i) {
  const Atom& a = g.atom(i);
  if (!a.aromatic) return false;
  const auto allowed = allowed_valences(a.element, a.charge);
  if (allowed.empty()) return false;
  const int used = detail::explicit_valence(g, i);
  const auto target = target_valence(allowed, used);
  return target && *target - used >= 1;
}

/// Hydrogen count the parser infers for an unbracketed atom in this graph,
/// or nullopt if the atom cannot be written without brackets.
inline std::optional<int> implied_hydrogens(const MolGraph& g, int i) {
  const Atom& a = g.atom(i);
  if (!is_organic_subset(a.element) || a.charge != 0 || a.isotope != 0) return std::nullopt;
  const auto allowed = allowed_valences(a.element, 0);
  int used = g.sigma_valence(i);
  if (a.aromatic) {
    const auto target = target_valence(allowed, used);
    if (!target) return std::nullopt;
    if (*target - used >= 1) used += 1;
  }
  const auto target = target_valence(allowed, used);
  if (!target) return std::nullopt;
  return *target - used;
}

/// Replaces aromatic bonds by alternating single/double bonds. Atoms that
/// need a pi bond are perfectly matched over aromatic bonds; aromatic flags
/// are left untouched (perception resets them later).
inline void kekulize(MolGraph& g) {
  const auto ring_atoms = g.ring_atoms();
  const auto ring_bonds = g.ring_bonds();
  for (int i = 0; i < g.atom_count(); ++i) {
    if (g.atom(i).aromatic && !ring_atoms[i]) {
      throw ParseError(ParseErrorKind::kAromaticity,
                       "aromatic atom " + std::to_string(i) + " is not in a ring");
    }
  }
  for (int b = 0; b < g.bond_count(); ++b) {
    Bond& bond = g.bond(b);
    if (bond.order != BondOrder::kAromatic) continue;
    if (!ring_bonds[b] || !g.atom(bond.begin).aromatic || !g.atom(bond.end).aromatic) {
      bond.order = BondOrder::kSingle;
    }
  }

  const int n = g.atom_count();
  std::vector<bool> needs(n, false);
  for (int i = 0; i < n; ++i) needs[i] = needs_pi_bond(g, i);

  std::vector<int> partner(n, -1);
  std::vector<int> pending;
  for (int i = 0; i < n; ++i) {
    if (needs[i]) pending.push_back(i);
  }

  auto candidates = [&](int i) {
    std::vector<int> out;
    for (const auto& nb : g.neighbors(i)) {
      if (g.bond(nb.bond).order == BondOrder::kAromatic && needs[nb.atom] && partner[nb.atom] < 0) {
        out.push_back(nb.atom);
      }
    }
    return out;
  };

  long budget = 200000;
  // Depth-first matching, always branching on the most constrained atom.
  auto solve = [&](auto&& self) -> bool {
    if (--budget < 0) return false;
    int best = -1;
    std::size_t best_options = 0;
    std::vector<int> best_list;
    for (int i : pending) {
      if (partner[i] >= 0) continue;
      auto options = candidates(i);
      if (options.empty()) return false;
      if (best < 0 || options.size() < best_options) {
        best = i;
        best_options = options.size();
        best_list = std::move(options);
        if (best_options == 1) break;
      }
    }
    if (best < 0) return true;
    for (int j : best_list) {
      partner[best] = j;
      partner[j] = best;
      if (self(self)) return true;
      partner[best] = -1;
      partner[j] = -1;
    }
    return false;
  };
  if (!solve(solve)) {
    throw ParseError(ParseErrorKind::kAromaticity, "no Kekule structure for aromatic system");
  }

  for (int b = 0; b < g.bond_count(); ++b) {
    Bond& bond = g.bond(b);
    if (bond.order != BondOrder::kAromatic) continue;
    bond.order = partner[bond.begin] == bond.end ? BondOrder::kDouble : BondOrder::kSingle;
  }
}

/// Fills implicit hydrogens of unbracketed atoms and rejects valence
/// violations. Expects a Kekulé graph (no aromatic bond orders).
inline void assign_hydrogens(MolGraph& g) {
  for (int i = 0; i < g.atom_count(); ++i) {
    Atom& a = g.atom(i);
    const auto allowed = allowed_valences(a.element, a.charge);
    const int bonds = g.sigma_valence(i);
    if (a.bracket) {
      if (!allowed.empty() && bonds + a.hydrogens > allowed.back()) {
        throw ParseError(ParseErrorKind::kValence,
                         "atom " + std::to_string(i) + " has valence " +
                             std::to_string(bonds + a.hydrogens));
      }
      continue;
    }
    const auto target = target_valence(allowed, bonds);
    if (!target) {
      throw ParseError(ParseErrorKind::kValence,
                       "atom " + std::to_string(i) + " has valence " + std::to_string(bonds));
    }
    a.hydrogens = *target - bonds;
  }
}

namespace detail {

/// Simple cycles with 5 to 7 ring bonds, each reported once.
inline std::vector<std::vector<int>> small_rings(const MolGraph& g,
                                                 const std::vector<bool>& ring_bond) {
  std::vector<std::vector<int>> rings;
  std::vector<int> path;
  std::vector<bool> on_path(g.atom_count(), false);
  auto extend = [&](auto&& self, int start, int cur) -> void {
    for (const auto& nb : g.neighbors(cur)) {
      if (!ring_bond[nb.bond]) continue;
      if (nb.atom == start && path.size() >= 5) {
        if (path[1] < path.back()) rings.push_back(path);
        continue;
      }
      if (nb.atom <= start || on_path[nb.atom] || path.size() >= 7) continue;
      on_path[nb.atom] = true;
      path.push_back(nb.atom);
      self(self, start, nb.atom);
      path.pop_back();
      on_path[nb.atom] = false;
    }
  };
  for (int s = 0; s < g.atom_count(); ++s) {
    path.assign(1, s);
    on_path[s] = true;
    extend(extend, s, s);
    on_path[s] = false;
  }
  return rings;
}

/// Pi electrons an atom donates to a ring, or -1 when it cannot be sp2.
inline int pi_electrons(const MolGraph& g, int i, const std::vector<bool>& ring_atom) {
  const Atom& a = g.atom(i);
  if (!is_aromatic_capable(a.element)) return -1;
  int doubles = 0;
  int partner = -1;
  for (const auto& nb : g.neighbors(i)) {
    const BondOrder order = g.bond(nb.bond).order;
    if (order == BondOrder::kTriple) return -1;
    if (order == BondOrder::kDouble) {
      ++doubles;
      partner = nb.atom;
    }
  }
  if (doubles > 1) return -1;
  if (doubles == 1) {
    if (ring_atom[partner]) return 1;
    const int pz = g.atom(partner).element;
    return (pz == 7 || pz == 8 || pz == 16) ? 0 : -1;
  }
  const int connections = g.degree(i) + a.hydrogens;
  switch (a.element) {
    case 7: case 15: case 33:
      return (a.charge == 0 && connections == 3) ? 2 : -1;
    case 8: case 16: case 34: case 52:
      return (a.charge == 0 && connections == 2) ? 2 : -1;
    case 6:
      if (a.charge == -1) return 2;
      if (a.charge == 1) return 0;
      return -1;
    case 5:
      return (a.charge == 0 && connections == 3) ? 0 : -1;
    default:
      return -1;
  }
}

}  // namespace detail

/// Marks rings of size 5-7 whose atoms are all sp2-capable and carry 4n+2 pi
/// electrons as aromatic. Expects a Kekulé graph with hydrogens assigned.
inline void perceive_aromaticity(MolGraph& g) {
  const auto ring_bond = g.ring_bonds();
  const auto ring_atom = g.ring_atoms();
  std::vector<int> electrons(g.atom_count());
  for (int i = 0; i < g.atom_count(); ++i) electrons[i] = detail::pi_electrons(g, i, ring_atom);

  std::vector<bool> aromatic_atom(g.atom_count(), false);
  std::vector<bool> aromatic_bond(g.bond_count(), false);
  for (const auto& ring : detail::small_rings(g, ring_bond)) {
    int total = 0;
    bool eligible = true;
    for (int i : ring) {
      if (electrons[i] < 0) {
        eligible = false;
        break;
      }
      total += electrons[i];
    }
    if (!eligible || total % 4 != 2) continue;
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const int a = ring[k];
      const int b = ring[(k + 1) % ring.size()];
      aromatic_atom[a] = true;
      aromatic_bond[g.find_bond(a, b)] = true;
    }
  }
  for (int i = 0; i < g.atom_count(); ++i) g.atom(i).aromatic = aromatic_atom[i];
  for (int b = 0; b < g.bond_count(); ++b) {
    if (aromatic_bond[b]) g.bond(b).order = BondOrder::kAromatic;
  }
}

}  // namespace bfn::chem
