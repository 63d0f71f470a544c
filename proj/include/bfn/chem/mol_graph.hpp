#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bfn::chem {

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

/// Valence contribution of a bond when aromatic bonds are counted as single.
inline int sigma_order(BondOrder order) {
  return order == BondOrder::kAromatic ? 1 : static_cast<int>(order);
}

struct Atom {
  int element = 6;  // atomic number
  int charge = 0;
  int isotope = 0;
  bool aromatic = false;
  int hydrogens = 0;  // total attached hydrogens (implicit + explicit)
  bool bracket = false;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondOrder order = BondOrder::kSingle;

  int other(int atom) const { return atom == begin ? end : begin; }
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Molecular graph with explicit hydrogens folded into atom counts.
class MolGraph {
 public:
  struct Neighbor {
    int atom;
    int bond;
  };

  int add_atom(const Atom& atom) {
    atoms_.push_back(atom);
    adjacency_.emplace_back();
    return static_cast<int>(atoms_.size()) - 1;
  }

  int add_bond(int a, int b, BondOrder order) {
    if (a < 0 || b < 0 || a >= atom_count() || b >= atom_count()) {
      throw GraphError("bond endpoint out of range");
    }
    if (a == b) throw GraphError("bond from an atom to itself");
    if (find_bond(a, b) >= 0) throw GraphError("duplicate bond");
    bonds_.push_back(Bond{a, b, order});
    const int index = static_cast<int>(bonds_.size()) - 1;
    adjacency_[a].push_back({b, index});
    adjacency_[b].push_back({a, index});
    return index;
  }

  int find_bond(int a, int b) const {
    for (const auto& n : adjacency_[a]) {
      if (n.atom == b) return n.bond;
    }
    return -1;
  }

  int atom_count() const { return static_cast<int>(atoms_.size()); }
  int bond_count() const { return static_cast<int>(bonds_.size()); }
  bool empty() const { return atoms_.empty(); }

  const Atom& atom(int i) const { return atoms_[i]; }
  Atom& atom(int i) { return atoms_[i]; }
  const Bond& bond(int i) const { return bonds_[i]; }
  Bond& bond(int i) { return bonds_[i]; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const std::vector<Neighbor>& neighbors(int i) const { return adjacency_[i]; }
  int degree(int i) const { return static_cast<int>(adjacency_[i].size()); }

  /// Sum of bond orders with aromatic bonds counted as one.
  int sigma_valence(int i) const {
    int total = 0;
    for (const auto& n : adjacency_[i]) total += sigma_order(bonds_[n.bond].order);
    return total;
  }

  int heavy_atom_count() const {
    int count = 0;
    for (const auto& a : atoms_) count += a.element != 1 ? 1 : 0;
    return count;
  }

  /// Connected component id per atom; returns the number of components.
  int components(std::vector<int>& component) const {
    component.assign(atoms_.size(), -1);
    int count = 0;
    std::vector<int> stack;
    for (int start = 0; start < atom_count(); ++start) {
      if (component[start] >= 0) continue;
      component[start] = count;
      stack.push_back(start);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        for (const auto& n : adjacency_[cur]) {
          if (component[n.atom] < 0) {
            component[n.atom] = count;
            stack.push_back(n.atom);
          }
        }
      }
      ++count;
    }
    return count;
  }

  /// Cyclomatic number: bonds - atoms + components.
  int ring_count() const {
    std::vector<int> component;
    const int c = components(component);
    return bond_count() - atom_count() + c;
  }

  /// Per-bond flag: true when the bond lies on a cycle (is not a bridge).
  std::vector<bool> ring_bonds() const {
    const int n = atom_count();
    std::vector<int> order(n, -1), low(n, 0);
    std::vector<bool> in_ring(bonds_.size(), true);
    int counter = 0;
    // Iterative Tarjan bridge finding.
    struct Frame {
      int atom;
      int parent_bond;
      std::size_t next;
    };
    std::vector<Frame> stack;
    for (int root = 0; root < n; ++root) {
      if (order[root] >= 0) continue;
      order[root] = low[root] = counter++;
      stack.push_back({root, -1, 0});
      while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < adjacency_[f.atom].size()) {
          const Neighbor nb = adjacency_[f.atom][f.next++];
          if (nb.bond == f.parent_bond) continue;
          if (order[nb.atom] < 0) {
            order[nb.atom] = low[nb.atom] = counter++;
            stack.push_back({nb.atom, nb.bond, 0});
          } else {
            low[f.atom] = std::min(low[f.atom], order[nb.atom]);
          }
        } else {
          const Frame done = f;
          stack.pop_back();
          if (!stack.empty()) {
            Frame& parent = stack.back();
            low[parent.atom] = std::min(low[parent.atom], low[done.atom]);
            if (low[done.atom] > order[parent.atom]) in_ring[done.parent_bond] = false;
          }
        }
      }
    }
    return in_ring;
  }

  std::vector<bool> ring_atoms() const {
    const auto rb = ring_bonds();
    std::vector<bool> out(atoms_.size(), false);
    for (int b = 0; b < bond_count(); ++b) {
      if (rb[b]) out[bonds_[b].begin] = out[bonds_[b].end] = true;
    }
    return out;
  }

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

}  // namespace bfn::chem
