#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bfn/chem/aromaticity.hpp"
#include "bfn/chem/canonical.hpp"
#include "bfn/chem/mol_graph.hpp"

namespace bfn::chem {

/// Splits "[C][=C][Branch1]..." into bracketed tokens; "." is kept as its
/// own token and characters outside brackets are dropped.
inline std::vector<std::string> split_selfies(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '.') {
      out.emplace_back(".");
      ++i;
    } else if (s[i] == '[') {
      const std::size_t close = s.find(']', i);
      if (close == std::string_view::npos) break;
      out.emplace_back(s.substr(i, close - i + 1));
      i = close + 1;
    } else {
      ++i;
    }
  }
  return out;
}

namespace detail {

struct SelfiesAtom {
  int element;
  int capacity;
};

inline std::optional<SelfiesAtom> selfies_element(std::string_view sym) {
  static constexpr std::array<std::pair<std::string_view, SelfiesAtom>, 10> kTable = {{
      {"C", {6, 4}}, {"N", {7, 3}}, {"O", {8, 2}}, {"F", {9, 1}}, {"S", {16, 6}},
      {"P", {15, 5}}, {"Cl", {17, 1}}, {"Br", {35, 1}}, {"I", {53, 1}}, {"B", {5, 3}},
  }};
  for (const auto& [name, info] : kTable) {
    if (name == sym) return info;
  }
  return std::nullopt;
}

inline int bond_prefix(std::string_view& body) {
  if (!body.empty() && body.front() == '=') {
    body.remove_prefix(1);
    return 2;
  }
  if (!body.empty() && body.front() == '#') {
    body.remove_prefix(1);
    return 3;
  }
  return 1;
}

enum class SelfiesKind { kAtom, kBranch, kRing, kEpsilon, kUnknown };

struct SelfiesToken {
  SelfiesKind kind = SelfiesKind::kUnknown;
  int bond = 1;           // bond order requested by the token
  int length_digits = 0;  // number of index tokens for branch/ring
  SelfiesAtom atom{0, 0};
};

inline SelfiesToken classify_selfies(std::string_view token) {
  SelfiesToken t;
  if (token.size() < 3 || token.front() != '[' || token.back() != ']') return t;
  std::string_view body = token.substr(1, token.size() - 2);
  if (body == "epsilon") {
    t.kind = SelfiesKind::kEpsilon;
    return t;
  }
  t.bond = bond_prefix(body);
  auto numbered = [&](std::string_view stem, SelfiesKind kind) {
    if (body.size() == stem.size() + 1 && body.starts_with(stem) && body.back() >= '1' &&
        body.back() <= '3') {
      t.kind = kind;
      t.length_digits = body.back() - '0';
      return true;
    }
    return false;
  };
  if (numbered("Branch", SelfiesKind::kBranch) || numbered("Ring", SelfiesKind::kRing)) return t;
  if (auto atom = selfies_element(body)) {
    t.kind = SelfiesKind::kAtom;
    t.atom = *atom;
  }
  return t;
}

/// Index value of a token used as a branch length / ring offset digit.
inline int selfies_index_value(std::string_view token) {
  static constexpr std::array<std::string_view, 16> kIndexAlphabet = {
      "[C]",       "[Ring1]",   "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]",
      "[Branch2]", "[=Branch2]", "[#Branch2]", "[O]",   "[N]",        "[=N]",
      "[=C]",      "[#C]",      "[S]",     "[P]"};
  for (std::size_t k = 0; k < kIndexAlphabet.size(); ++k) {
    if (kIndexAlphabet[k] == token) return static_cast<int>(k);
  }
  return 0;
}

class SelfiesDeriver {
 public:
  explicit SelfiesDeriver(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}

  MolGraph run() {
    std::vector<std::string> all = std::move(tokens_);
    std::vector<std::string> fragment;
    auto flush = [&] {
      tokens_ = std::move(fragment);
      fragment.clear();
      pos_ = 0;
      derive(kUnbounded, 0, -1);
    };
    for (auto& tok : all) {
      if (tok == ".") {
        flush();
      } else if (tok != "[nop]") {
        fragment.push_back(std::move(tok));
      }
    }
    flush();
    form_rings();
    return std::move(graph_);
  }

 private:
  static constexpr long kUnbounded = 1L << 40;

  struct PendingRing {
    int left;
    int right;
    int order;
  };

  int read_index(int digits) {
    int value = 0;
    for (int k = 0; k < digits; ++k) {
      int digit = 0;
      if (pos_ < tokens_.size()) digit = selfies_index_value(tokens_[pos_++]);
      value = value * 16 + digit;
    }
    return value;
  }

  // Mirrors the reference derivation: `state` is the remaining bonding
  // capacity of the previous atom; a missing state ends the derivation.
  long derive(long max_derive, int init_state, int root) {
    long derived = 0;
    std::optional<int> state = init_state;
    int prev = root;
    while (state && derived < max_derive) {
      if (pos_ >= tokens_.size()) break;
      const SelfiesToken tok = classify_selfies(tokens_[pos_++]);
      ++derived;
      std::optional<int> next = state;
      switch (tok.kind) {
        case SelfiesKind::kBranch:
          if (*state > 1) {
            const int branch_state = std::min(*state - 1, tok.bond);
            next = *state - branch_state;
            const int q = read_index(tok.length_digits);
            derived += tok.length_digits + derive(q + 1, branch_state, prev);
          }
          break;
        case SelfiesKind::kRing:
          if (*state != 0) {
            const int order = std::min(tok.bond, *state);
            const int left = *state - order;
            next = left == 0 ? std::nullopt : std::optional<int>(left);
            const int q = read_index(tok.length_digits);
            derived += tok.length_digits;
            rings_.push_back({std::max(0, prev - (q + 1)), prev, order});
          }
          break;
        case SelfiesKind::kEpsilon:
          next = *state == 0 ? std::optional<int>(0) : std::nullopt;
          break;
        case SelfiesKind::kAtom: {
          int order = *state == 0 ? 0 : tok.bond;
          order = std::min({order, *state, tok.atom.capacity});
          const int left = tok.atom.capacity - order;
          next = left == 0 ? std::nullopt : std::optional<int>(left);
          Atom atom;
          atom.element = tok.atom.element;
          const int index = graph_.add_atom(atom);
          capacity_.push_back(tok.atom.capacity);
          used_.push_back(0);
          if (order > 0) add_bond(prev, index, order);
          prev = index;
          break;
        }
        case SelfiesKind::kUnknown:
          break;
      }
      if (!next) break;
      state = next;
    }
    while (derived < max_derive && pos_ < tokens_.size()) {
      ++pos_;
      ++derived;
    }
    return derived;
  }

  void add_bond(int a, int b, int order) {
    graph_.add_bond(a, b, static_cast<BondOrder>(order));
    used_[a] += order;
    used_[b] += order;
  }

  void form_rings() {
    for (const auto& ring : rings_) {
      if (ring.left == ring.right) continue;
      const int lfree = capacity_[ring.left] - used_[ring.left];
      const int rfree = capacity_[ring.right] - used_[ring.right];
      if (lfree <= 0 || rfree <= 0) continue;
      const int order = std::min({ring.order, lfree, rfree});
      const int existing = graph_.find_bond(ring.left, ring.right);
      if (existing >= 0) {
        Bond& bond = graph_.bond(existing);
        const int old_order = static_cast<int>(bond.order);
        const int new_order = std::min(order + old_order, 3);
        bond.order = static_cast<BondOrder>(new_order);
        used_[ring.left] += new_order - old_order;
        used_[ring.right] += new_order - old_order;
      } else {
        add_bond(ring.left, ring.right, order);
      }
    }
  }

  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  MolGraph graph_;
  std::vector<int> capacity_;
  std::vector<int> used_;
  std::vector<PendingRing> rings_;
};

}  // namespace detail

/// Builds the molecular graph a SELFIES string derives. Never fails:
/// unsupported tokens are skipped and bond orders, branches and ring bonds
/// are truncated to the remaining bonding capacity.
inline MolGraph selfies_to_graph(std::string_view selfies) {
  MolGraph g = detail::SelfiesDeriver(split_selfies(selfies)).run();
  assign_hydrogens(g);
  return g;
}

/// SELFIES to SMILES, atoms written in derivation order.
inline std::string decode_selfies(std::string_view selfies) {
  const MolGraph g = selfies_to_graph(selfies);
  if (g.empty()) return {};
  return write_smiles(g);
}

}  // namespace bfn::chem
