#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "bfn/chem/aromaticity.hpp"
#include "bfn/chem/elements.hpp"
#include "bfn/chem/mol_graph.hpp"

namespace bfn::chem {

namespace detail {

inline int bond_code(BondOrder order) { return static_cast<int>(order); }

/// Dense class ids (0..n-1) ordering atoms by their keys.
template <class Key>
std::vector<int> classes_from_keys(const std::vector<Key>& keys) {
  std::vector<int> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<int> cls(keys.size(), 0);
  int current = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && keys[order[k - 1]] < keys[order[k]]) current = static_cast<int>(k);
    cls[order[k]] = current;
  }
  return cls;
}

inline int count_classes(const std::vector<int>& cls) {
  std::vector<int> copy = cls;
  std::sort(copy.begin(), copy.end());
  return static_cast<int>(std::unique(copy.begin(), copy.end()) - copy.begin());
}

/// Refines atom classes by neighbourhood until the partition is stable.
inline std::vector<int> refine(const MolGraph& g, std::vector<int> cls) {
  using Key = std::pair<int, std::vector<std::pair<int, int>>>;
  int classes = count_classes(cls);
  while (true) {
    std::vector<Key> keys(g.atom_count());
    for (int i = 0; i < g.atom_count(); ++i) {
      keys[i].first = cls[i];
      for (const auto& nb : g.neighbors(i)) {
        keys[i].second.emplace_back(cls[nb.atom], bond_code(g.bond(nb.bond).order));
      }
      std::sort(keys[i].second.begin(), keys[i].second.end());
    }
    auto next = classes_from_keys(keys);
    const int next_classes = count_classes(next);
    cls = std::move(next);
    if (next_classes == classes) return cls;
    classes = next_classes;
  }
}

inline std::vector<int> initial_classes(const MolGraph& g) {
  const auto ring_atom = g.ring_atoms();
  using Key = std::tuple<int, int, int, int, int, int, int>;
  std::vector<Key> keys(g.atom_count());
  for (int i = 0; i < g.atom_count(); ++i) {
    const Atom& a = g.atom(i);
    keys[i] = Key{g.degree(i), a.element, a.isotope, a.charge, a.hydrogens,
                  a.aromatic ? 1 : 0, ring_atom[i] ? 1 : 0};
  }
  return classes_from_keys(keys);
}

class SmilesWriter {
 public:
  SmilesWriter(const MolGraph& g, const std::vector<int>& rank) : g_(g), rank_(rank) {}

  std::string write() {
    const int n = g_.atom_count();
    visited_.assign(n, false);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return rank_[a] < rank_[b]; });

    // Pass 1: spanning forest; non-tree bonds become ring closures.
    tree_bond_.assign(g_.bond_count(), false);
    children_.assign(n, {});
    closures_.assign(n, {});
    std::vector<int> roots;
    for (int start : order) {
      if (visited_[start]) continue;
      roots.push_back(start);
      build(start, -1);
    }
    // Ring-closure bonds are attached at both ends, in visit order.
    std::vector<int> visit_index(n, 0);
    for (std::size_t k = 0; k < visit_order_.size(); ++k) visit_index[visit_order_[k]] = static_cast<int>(k);
    for (int b = 0; b < g_.bond_count(); ++b) {
      if (tree_bond_[b]) continue;
      const Bond& bond = g_.bond(b);
      closures_[bond.begin].push_back(b);
      closures_[bond.end].push_back(b);
    }
    for (int i = 0; i < n; ++i) {
      std::sort(closures_[i].begin(), closures_[i].end(), [&](int x, int y) {
        const int ox = g_.bond(x).other(i);
        const int oy = g_.bond(y).other(i);
        const bool x_open = visit_index[ox] > visit_index[i];
        const bool y_open = visit_index[oy] > visit_index[i];
        // Closing digits first (lower reuse), then openings by partner rank.
        if (x_open != y_open) return !x_open;
        return visit_index[ox] < visit_index[oy];
      });
    }
    visit_index_ = std::move(visit_index);

    std::string out;
    ring_digit_.assign(g_.bond_count(), -1);
    for (std::size_t r = 0; r < roots.size(); ++r) {
      if (r > 0) out += '.';
      emit(roots[r], -1, out);
    }
    return out;
  }

 private:
  void build(int atom, int parent_bond) {
    visited_[atom] = true;
    visit_order_.push_back(atom);
    std::vector<MolGraph::Neighbor> nbrs(g_.neighbors(atom).begin(), g_.neighbors(atom).end());
    std::sort(nbrs.begin(), nbrs.end(),
              [&](const auto& a, const auto& b) { return rank_[a.atom] < rank_[b.atom]; });
    for (const auto& nb : nbrs) {
      if (nb.bond == parent_bond || visited_[nb.atom]) continue;
      tree_bond_[nb.bond] = true;
      children_[atom].push_back(nb);
      build(nb.atom, nb.bond);
    }
  }

  std::string bond_symbol(int b) const {
    const Bond& bond = g_.bond(b);
    const bool both_aromatic = g_.atom(bond.begin).aromatic && g_.atom(bond.end).aromatic;
    switch (bond.order) {
      case BondOrder::kSingle: return both_aromatic ? "-" : "";
      case BondOrder::kDouble: return "=";
      case BondOrder::kTriple: return "#";
      case BondOrder::kAromatic: return "";
    }
    return "";
  }

  std::string atom_symbol(int i) const {
    const Atom& a = g_.atom(i);
    std::string sym(element_symbol(a.element));
    if (a.aromatic) sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));
    const auto implied = implied_hydrogens(g_, i);
    if (implied && *implied == a.hydrogens) return sym;
    std::string out = "[";
    if (a.isotope > 0) out += std::to_string(a.isotope);
    out += sym;
    if (a.hydrogens > 0) {
      out += 'H';
      if (a.hydrogens > 1) out += std::to_string(a.hydrogens);
    }
    if (a.charge != 0) {
      out += a.charge > 0 ? '+' : '-';
      const int mag = a.charge > 0 ? a.charge : -a.charge;
      if (mag > 1) out += std::to_string(mag);
    }
    out += ']';
    return out;
  }

  static std::string digit_text(int d) {
    return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
  }

  void emit(int atom, int parent_bond, std::string& out) {
    if (parent_bond >= 0) out += bond_symbol(parent_bond);
    out += atom_symbol(atom);
    for (int b : closures_[atom]) {
      if (ring_digit_[b] >= 0) {
        out += digit_text(ring_digit_[b]);
        digits_in_use_[ring_digit_[b]] = false;
      } else {
        int d = 1;
        while (d < 100 && digits_in_use_[d]) ++d;
        digits_in_use_[d] = true;
        ring_digit_[b] = d;
        out += bond_symbol(b);
        out += digit_text(d);
      }
    }
    const auto& kids = children_[atom];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) out += '(';
      emit(kids[k].atom, kids[k].bond, out);
      if (!last) out += ')';
    }
  }

  const MolGraph& g_;
  const std::vector<int>& rank_;
  std::vector<bool> visited_;
  std::vector<int> visit_order_;
  std::vector<int> visit_index_;
  std::vector<bool> tree_bond_;
  std::vector<std::vector<MolGraph::Neighbor>> children_;
  std::vector<std::vector<int>> closures_;
  std::vector<int> ring_digit_;
  std::array<bool, 101> digits_in_use_{};
};

}  // namespace detail

/// Writes a SMILES string visiting atoms in ascending `rank` order.
inline std::string write_smiles(const MolGraph& g, const std::vector<int>& rank) {
  return detail::SmilesWriter(g, rank).write();
}

/// Writes atoms in input order.
inline std::string write_smiles(const MolGraph& g) {
  std::vector<int> rank(g.atom_count());
  std::iota(rank.begin(), rank.end(), 0);
  return write_smiles(g, rank);
}

/// Canonical atom ranking. Ties left after refinement are broken by trying
/// every member of the first tied class and keeping the lexicographically
/// smallest SMILES; the search is bounded by `budget` complete labelings.
inline std::vector<int> canonical_ranks(const MolGraph& g, int budget = 64) {
  const int n = g.atom_count();
  if (n == 0) return {};
  std::vector<int> best_rank;
  std::string best_smiles;
  int leaves = 0;

  auto search = [&](auto&& self, std::vector<int> cls) -> void {
    cls = detail::refine(g, std::move(cls));
    if (detail::count_classes(cls) == n) {
      ++leaves;
      std::string s = write_smiles(g, cls);
      if (best_rank.empty() || s < best_smiles) {
        best_smiles = std::move(s);
        best_rank = cls;
      }
      return;
    }
    // First tied class (smallest class id shared by two or more atoms).
    std::vector<int> count(n, 0);
    for (int c : cls) ++count[c];
    int tied = -1;
    for (int c = 0; c < n; ++c) {
      if (count[c] > 1) {
        tied = c;
        break;
      }
    }
    for (int i = 0; i < n; ++i) {
      if (cls[i] != tied) continue;
      if (leaves >= budget && !best_rank.empty()) return;
      // Split atom i out of its class: it keeps the class id, peers move up.
      std::vector<int> split(n);
      for (int j = 0; j < n; ++j) split[j] = 2 * cls[j] + ((cls[j] == tied && j != i) ? 1 : 0);
      self(self, std::move(split));
    }
  };
  search(search, detail::initial_classes(g));
  return best_rank;
}

inline std::string canonical_smiles(const MolGraph& g) {
  if (g.empty()) return {};
  return write_smiles(g, canonical_ranks(g));
}

}  // namespace bfn::chem
